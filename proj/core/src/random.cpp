#include "nest/random.hpp"

#include <cmath>
#include <sstream>

#include "nest/error.hpp"

namespace nest {

double Rng::trunc_normal(double std) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= 2.0) return z * std;
  }
}

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream in(state);
  in >> engine_;
  if (!in) throw IoError("corrupt random generator state");
}

}  // namespace nest
