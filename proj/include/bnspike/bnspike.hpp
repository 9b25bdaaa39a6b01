#pragma once

// Umbrella header for the library core. The harness headers under
// bnspike/harness/ are included separately by the CLI and tests.

#include "bnspike/dataset.hpp"
#include "bnspike/dataset_io.hpp"
#include "bnspike/dynamics.hpp"
#include "bnspike/error.hpp"
#include "bnspike/init.hpp"
#include "bnspike/model.hpp"
#include "bnspike/reference.hpp"
#include "bnspike/sharpness.hpp"
#include "bnspike/svm.hpp"
#include "bnspike/theorems_linear.hpp"
#include "bnspike/theorems_logistic.hpp"
#include "bnspike/trajectory_io.hpp"
#include "bnspike/verdict.hpp"
