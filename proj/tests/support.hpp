#pragma once

#include <polydet/samples.hpp>

namespace testing_support {

using polydet::samples::random_convex;
using polydet::samples::random_convex_suite;
using polydet::samples::rectangle;
using polydet::samples::regular;
using polydet::samples::unit_square;

} // namespace testing_support
