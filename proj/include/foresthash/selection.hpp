#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace foresthash {

enum class SelectionMethod : std::uint8_t { mi = 0, random = 1 };

/// The k code blocks (tree indices) concatenated, in order, to form the final hash.
/// Produced once at training time and frozen into the model.
struct BlockSelection {
    std::vector<std::uint32_t> indices;
    std::optional<double> objective_value;  // unset for random selection
    SelectionMethod method = SelectionMethod::mi;

    std::size_t k() const noexcept { return indices.size(); }
    friend bool operator==(const BlockSelection&, const BlockSelection&) = default;
};

}  // namespace foresthash
