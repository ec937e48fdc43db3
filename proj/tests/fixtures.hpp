#pragma once

#include <vector>

#include "slung/physics.hpp"

namespace slung::testing {

inline MotorBank test_motors(double cap = 0.15, double tau = 0.02) {
  MotorBank m;
  m.thrust_cap = {cap, cap, cap, cap};
  m.lag_time_constant = tau;
  return m;
}

// Q level quads at rest in a ring of radius `ring` at height z, payload
// hanging `drop` below the centroid.
inline WorldState make_world(int q, double z = 1.5, double ring = 0.12,
                             double drop = 0.25) {
  WorldState w;
  w.quads.resize(q);
  w.motors.assign(q, test_motors());
  for (int i = 0; i < q; ++i) {
    const double phi = 2.0 * kPi * i / q;
    w.quads[i].position =
        q == 1 ? Vec3(0, 0, z) : Vec3(ring * std::cos(phi), ring * std::sin(phi), z);
  }
  w.payload.position = Vec3(0, 0, z - drop);
  return w;
}

inline std::vector<MotorVec> uniform_thrust(int q, double f) {
  return std::vector<MotorVec>(q, MotorVec{f, f, f, f});
}

}  // namespace slung::testing
