#pragma once

#include "mgw/mgw.hpp"

#include <string>

namespace mgw::test {

inline Model model(const std::string& name) { return load_model_file(std::string(MGW_MODELS) + "/" + name + ".json"); }

inline KernelPtr kernel(const std::string& name, WalkKind kind = WalkKind::plain) {
  return make_kernel(model(name), kind);
}

}  // namespace mgw::test
