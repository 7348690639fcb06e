#include "hemalimit/parallel.hpp"

#include <cstdlib>
#include <string>

namespace hemalimit {

int default_workers() {
  if (const char* env = std::getenv("HEMALIMIT_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w > 0) return w;
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace hemalimit
