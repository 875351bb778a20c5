#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gfmmr {

inline constexpr int kMaxComponents = 12;

/// A nonempty subset of objective clusters. Components are 0-based in code;
/// labels use the 1-based convention ("1", "12", "123").
class OverlapPattern {
public:
    OverlapPattern() = default;
    /// Throws DataError for an empty mask.
    explicit OverlapPattern(std::uint32_t mask);
    /// From 0-based member indices; throws DataError on duplicates or negatives.
    static OverlapPattern from_members(const std::vector<int>& members);

    std::uint32_t mask() const noexcept { return mask_; }
    int size() const noexcept;
    bool contains(int component) const noexcept { return (mask_ >> component) & 1U; }
    /// Strictly increasing 0-based member list.
    std::vector<int> members() const;
    /// Highest member + 1.
    int span() const noexcept;
    std::string label() const;

    friend bool operator==(OverlapPattern a, OverlapPattern b) noexcept { return a.mask_ == b.mask_; }
    friend bool operator!=(OverlapPattern a, OverlapPattern b) noexcept { return a.mask_ != b.mask_; }

private:
    std::uint32_t mask_ = 0;
};

/// All 2^K - 1 overlap patterns in canonical order: cardinality, then lexicographic.
class PatternSet {
public:
    PatternSet() = default;
    explicit PatternSet(int K);

    int K() const noexcept { return K_; }
    int size() const noexcept { return static_cast<int>(patterns_.size()); }
    const OverlapPattern& operator[](int t) const { return patterns_[static_cast<std::size_t>(t)]; }
    const std::vector<OverlapPattern>& patterns() const noexcept { return patterns_; }
    auto begin() const noexcept { return patterns_.begin(); }
    auto end() const noexcept { return patterns_.end(); }

    /// Position of a pattern in canonical order; -1 when absent.
    int index_of(OverlapPattern p) const noexcept;
    /// Indices of the patterns that include `component`.
    const std::vector<int>& containing(int component) const;
    /// Indices of the patterns of the given cardinality.
    std::vector<int> of_size(int cardinality) const;
    std::vector<int> singletons() const { return of_size(1); }
    std::vector<std::string> labels() const;

private:
    int K_ = 0;
    std::vector<OverlapPattern> patterns_;
    std::vector<int> index_by_mask_;
    std::vector<std::vector<int>> containing_;
};

/// Throws SizeLimitError unless 1 <= K <= 12.
PatternSet enumerate_patterns(int K);

}  // namespace gfmmr
