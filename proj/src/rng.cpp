#include "coach/rng.hpp"

#include <sstream>

#include "coach/errors.hpp"

namespace coach {

std::string Rng::save() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream in(state);
  in >> engine_;
  if (!in) throw FormatError("corrupt generator state");
}

}  // namespace coach
