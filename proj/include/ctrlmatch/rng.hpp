#pragma once

#include "ctrlmatch/types.hpp"

#include <cstdint>

namespace ctrlmatch {

/// xoshiro256++ with splitmix64 seeding; deterministic across platforms.
class Xoshiro256pp {
  public:
    explicit Xoshiro256pp(uint64_t seed);
    uint64_t next();
    /// uniform double in [0, 1)
    double uniform();

  private:
    uint64_t state_[4];
};

/// Standard normals via Box-Muller over xoshiro256++.
class GaussianSampler {
  public:
    explicit GaussianSampler(uint64_t seed) : rng_(seed) {}
    double standard_normal();

  private:
    Xoshiro256pp rng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// n_samples columns of N(0, covariance) draws; covariance may be PSD.
Matrix seeded_noise(uint64_t seed, const Matrix& covariance, int n_samples);

}  // namespace ctrlmatch
