#include "contdt/numerics/rng.hpp"

namespace contdt {

namespace {
std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace

Rng::result_type Rng::operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
}

Rng Rng::child(std::string_view name) const {
    return Rng(mix(seed_ ^ mix(fnv1a64(name.data(), name.size()))));
}

Rng Rng::child(std::uint64_t index) const {
    return Rng(mix(seed_ + mix(index + 0x632be59bd9b4e019ULL)));
}

double Rng::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double Rng::normal(double mean, double stddev) {
    return gauss_(*this, std::normal_distribution<double>::param_type(mean, stddev));
}

std::uint64_t Rng::below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(*this);
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace contdt
