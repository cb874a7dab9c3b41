#include "planter/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace planter::rng {

std::vector<int> permutation(int n, std::uint64_t seed) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Prng rng(seed);
    shuffle(idx, rng);
    return idx;
}

std::vector<int> sample_without_replacement(int n, int k, std::uint64_t seed) {
    if (k < 0 || k > n) throw std::invalid_argument("sample_without_replacement: k out of range");
    std::vector<int> idx = permutation(n, seed);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace planter::rng
