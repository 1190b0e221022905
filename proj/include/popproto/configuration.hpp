#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace popproto {

/// Count vector over the states of a protocol.
struct Configuration {
    std::vector<std::int64_t> counts;

    Configuration() = default;
    explicit Configuration(std::vector<std::int64_t> c) : counts(std::move(c)) {
        for (auto x : counts)
            if (x < 0) throw std::invalid_argument("negative state count");
    }

    std::int64_t n() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }
    std::size_t size() const { return counts.size(); }
    std::int64_t operator[](std::size_t s) const { return counts[s]; }
    std::int64_t& operator[](std::size_t s) { return counts[s]; }

    friend bool operator==(const Configuration&, const Configuration&) = default;
};

}  // namespace popproto
