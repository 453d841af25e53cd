#pragma once

#define TOMO_VERSION_MAJOR 0
#define TOMO_VERSION_MINOR 1
#define TOMO_VERSION_PATCH 0

namespace tomo {
inline constexpr const char* kVersion = "0.1.0";
}
