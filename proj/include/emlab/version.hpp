#pragma once

namespace emlab {

inline constexpr const char* kVersion = "emlab 0.1.0";

}
