#pragma once

#include "diracctl/errors.hpp"
#include "diracctl/mesh.hpp"
#include "diracctl/elliptic.hpp"
#include "diracctl/state.hpp"
#include "diracctl/adjoint.hpp"
#include "diracctl/optimizer.hpp"
#include "diracctl/analysis.hpp"
#include "diracctl/problem.hpp"
