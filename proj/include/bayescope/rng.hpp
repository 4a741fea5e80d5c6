#pragma once

#include <cstdint>

#include "bayescope/tensor.hpp"

namespace bayescope {

/// Deterministic random stream (splitmix64 core, Box-Muller normals).
///
/// The generator is self-contained so that sequences are bit-identical across
/// platforms and standard-library versions; std::normal_distribution makes no
/// such guarantee. Streams for parallel work are derived with mix(), never by
/// sharing state.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    /// Stateless combiner for derived stream seeds, e.g. per-sample streams
    /// seeded with mix(base_seed, sample_index).
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

    static RngStream derived(std::uint64_t base, std::uint64_t index) {
        return RngStream(mix(base, index));
    }

    std::uint64_t next_u64();

    double uniform();  // [0, 1)
    double uniform(double lo, double hi);
    double normal();   // standard normal

    Tensor normal_tensor(const Shape& shape);
    Tensor uniform_tensor(const Shape& shape, double lo, double hi);

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace bayescope
