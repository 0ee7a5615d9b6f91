#include "isd/rng.hpp"

#include <sstream>

#include "isd/errors.hpp"

namespace isd {

std::string rng_state(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void restore_rng_state(Rng& rng, const std::string& state) {
  std::istringstream in(state);
  in >> rng;
  if (!in) throw CheckpointError("corrupt RNG state");
}

}  // namespace isd
