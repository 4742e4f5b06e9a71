#include "nbuddy/version.hpp"

namespace nbuddy {

const char* version() { return "1.0.0"; }

}  // namespace nbuddy
