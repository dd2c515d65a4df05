#pragma once

#include <json.hpp>

#include "aad/iforest.hpp"

// Hand-built trees for exact expectations.
namespace fixture {

inline nlohmann::json leaf() { return {{"f", -1}, {"v", 0.0}, {"l", -1}, {"r", -1}, {"n", 1}}; }

inline nlohmann::json split(int f, double v, int l, int r) {
  return {{"f", f}, {"v", v}, {"l", l}, {"r", r}, {"n", 2}};
}

inline aad::IsolationTree root_only(aad::Index dim) {
  return aad::IsolationTree::from_json(nlohmann::json::array({leaf()}), dim);
}

// x0 <= v | x0 > v
inline aad::IsolationTree one_split(aad::Index dim, double v = 0.5, int f = 0) {
  return aad::IsolationTree::from_json(nlohmann::json::array({split(f, v, 1, 2), leaf(), leaf()}), dim);
}

// Left spine on x0 at thresholds 3, 2, 1: the leaf x0 <= 1 sits at depth 3.
inline aad::IsolationTree spine(aad::Index dim) {
  return aad::IsolationTree::from_json(
      nlohmann::json::array({split(0, 3, 1, 2), split(0, 2, 3, 4), leaf(), split(0, 1, 5, 6), leaf(), leaf(), leaf()}),
      dim);
}

}  // namespace fixture
