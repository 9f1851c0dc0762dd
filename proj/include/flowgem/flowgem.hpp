#pragma once

#include "flowgem/dataset.hpp"
#include "flowgem/error.hpp"
#include "flowgem/evaluate.hpp"
#include "flowgem/flow.hpp"
#include "flowgem/kernel.hpp"
#include "flowgem/matrix.hpp"
#include "flowgem/normal.hpp"
#include "flowgem/rng.hpp"
#include "flowgem/simulate.hpp"
#include "flowgem/velocity.hpp"

namespace flowgem {
inline constexpr const char* version = "0.1.0";
}
