#include "tracediff/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace tracediff {

Image2D Rng::normal_image(int height, int width) {
    Image2D img(height, width);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (float& v : img.data()) v = static_cast<float>(dist(engine_));
    return img;
}

std::string Rng::state() const {
    std::ostringstream out;
    out << engine_;
    return out.str();
}

void Rng::restore(const std::string& state) {
    std::istringstream in(state);
    in >> engine_;
    if (!in) throw std::invalid_argument("malformed RNG state");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace tracediff
