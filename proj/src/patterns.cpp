#include "gfmmr/patterns.hpp"

#include <algorithm>
#include <bit>

#include "gfmmr/errors.hpp"

namespace gfmmr {

OverlapPattern::OverlapPattern(std::uint32_t mask) : mask_(mask) {
    if (mask == 0) throw DataError("overlap pattern must be nonempty");
}

OverlapPattern OverlapPattern::from_members(const std::vector<int>& members) {
    std::uint32_t mask = 0;
    for (int m : members) {
        if (m < 0 || m >= 32) throw DataError("pattern member out of range: " + std::to_string(m));
        if ((mask >> m) & 1U) throw DataError("duplicate pattern member: " + std::to_string(m));
        mask |= 1U << m;
    }
    return OverlapPattern(mask);
}

int OverlapPattern::size() const noexcept { return std::popcount(mask_); }

std::vector<int> OverlapPattern::members() const {
    std::vector<int> out;
    for (int c = 0; c < 32; ++c)
        if (contains(c)) out.push_back(c);
    return out;
}

int OverlapPattern::span() const noexcept { return 32 - std::countl_zero(mask_); }

std::string OverlapPattern::label() const {
    std::string out;
    const auto m = members();
    const bool wide = span() > 9;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (wide && i > 0) out += '+';
        out += std::to_string(m[i] + 1);
    }
    return out;
}

PatternSet::PatternSet(int K) : K_(K) {
    if (K < 1 || K > kMaxComponents)
        throw SizeLimitError("K must be in 1.." + std::to_string(kMaxComponents) + ", got " +
                             std::to_string(K));
    const std::uint32_t count = (1U << K) - 1U;
    patterns_.reserve(count);
    for (std::uint32_t mask = 1; mask <= count; ++mask) patterns_.emplace_back(mask);
    std::sort(patterns_.begin(), patterns_.end(), [](OverlapPattern a, OverlapPattern b) {
        if (a.size() != b.size()) return a.size() < b.size();
        return a.members() < b.members();
    });
    index_by_mask_.assign(count + 1U, -1);
    containing_.assign(static_cast<std::size_t>(K), {});
    for (int t = 0; t < size(); ++t) {
        index_by_mask_[patterns_[static_cast<std::size_t>(t)].mask()] = t;
        for (int c : patterns_[static_cast<std::size_t>(t)].members())
            containing_[static_cast<std::size_t>(c)].push_back(t);
    }
}

int PatternSet::index_of(OverlapPattern p) const noexcept {
    if (p.mask() == 0 || p.mask() >= index_by_mask_.size()) return -1;
    return index_by_mask_[p.mask()];
}

const std::vector<int>& PatternSet::containing(int component) const {
    if (component < 0 || component >= K_)
        throw DataError("component index out of range: " + std::to_string(component));
    return containing_[static_cast<std::size_t>(component)];
}

std::vector<int> PatternSet::of_size(int cardinality) const {
    std::vector<int> out;
    for (int t = 0; t < size(); ++t)
        if ((*this)[t].size() == cardinality) out.push_back(t);
    return out;
}

std::vector<std::string> PatternSet::labels() const {
    std::vector<std::string> out;
    out.reserve(patterns_.size());
    for (const auto& p : patterns_) out.push_back(p.label());
    return out;
}

PatternSet enumerate_patterns(int K) { return PatternSet(K); }

}  // namespace gfmmr
