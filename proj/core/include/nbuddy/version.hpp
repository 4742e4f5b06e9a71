#pragma once

namespace nbuddy {

// Library version string, "major.minor.patch".
const char* version();

}  // namespace nbuddy
