#pragma once

#include "mixedcurv/chart.hpp"
#include "mixedcurv/curvature.hpp"
#include "mixedcurv/expr.hpp"
#include "mixedcurv/extrinsic.hpp"
#include "mixedcurv/frame.hpp"
#include "mixedcurv/functionals.hpp"
#include "mixedcurv/geometry.hpp"
#include "mixedcurv/jet.hpp"
#include "mixedcurv/linalg.hpp"
#include "mixedcurv/metric.hpp"
#include "mixedcurv/report.hpp"
#include "mixedcurv/scenario.hpp"
#include "mixedcurv/variational.hpp"
