#include "derand/config.hpp"

#include <stdexcept>

namespace derand {

std::string to_string(Profile p) {
  return p == Profile::kPaper ? "paper" : "practical";
}

Profile parse_profile(const std::string& s) {
  if (s == "paper") return Profile::kPaper;
  if (s == "practical") return Profile::kPractical;
  throw std::invalid_argument("unknown profile '" + s + "'");
}

Constants Constants::paper() {
  return {1e8, 1e6, 1e30, 100.0, 10.0, true, true, false, 0.0};
}

Constants Constants::practical() {
  return {8.0, 4.0, 30.0, 4.0, 4.0, false, false, true, 0.5};
}

Constants Constants::for_profile(Profile p) {
  return p == Profile::kPaper ? paper() : practical();
}

EngineConfig EngineConfig::for_profile(Profile p) {
  EngineConfig c;
  c.profile = p;
  c.constants = Constants::for_profile(p);
  return c;
}

}  // namespace derand
