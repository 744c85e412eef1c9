#pragma once

#include "unobs_lab/csv_io.hpp"
#include "unobs_lab/equivalence.hpp"
#include "unobs_lab/errors.hpp"
#include "unobs_lab/estimation.hpp"
#include "unobs_lab/heavytail.hpp"
#include "unobs_lab/model_core.hpp"
#include "unobs_lab/parallel.hpp"
#include "unobs_lab/quadrature.hpp"
#include "unobs_lab/rng.hpp"
#include "unobs_lab/simplex.hpp"
#include "unobs_lab/special.hpp"
#include "unobs_lab/sym_matrix.hpp"
