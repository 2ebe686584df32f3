#pragma once

#include "mattnet/rng.hpp"

namespace mattnet {

/// Train mode enables dropout and needs an rng; eval mode is deterministic.
struct ForwardMode {
  bool train = false;
  Rng* rng = nullptr;

  static ForwardMode eval() { return {}; }
  static ForwardMode training(Rng& r) { return {true, &r}; }
};

}  // namespace mattnet
