#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace unitsa::sim {

inline constexpr std::size_t kMovements = 8;

/// The eight signalized movements in canonical row order. Letters name the
/// approach the vehicles arrive from; an `L` suffix marks the left turn.
/// Right turns are never signalized and have no id.
enum class MovementId : std::size_t { N = 0, NL, E, EL, W, WL, S, SL };

template <typename T>
using MovementArray = std::array<T, kMovements>;

/// Set of movements, bit i = MovementId i. Used for phase green sets.
using MovementMask = std::bitset<kMovements>;

inline constexpr std::array<std::string_view, kMovements> kMovementNames = {
    "N", "NL", "E", "EL", "W", "WL", "S", "SL"};

constexpr std::size_t index(MovementId m) { return static_cast<std::size_t>(m); }

constexpr std::string_view name(MovementId m) { return kMovementNames[index(m)]; }

constexpr std::string_view movement_name(std::size_t i) { return kMovementNames.at(i); }

inline std::optional<MovementId> parse_movement(std::string_view text) {
  for (std::size_t i = 0; i < kMovements; ++i) {
    if (kMovementNames[i] == text) return static_cast<MovementId>(i);
  }
  return std::nullopt;
}

/// Straight movements sit on even rows, left turns on odd rows.
constexpr bool is_straight_movement(std::size_t i) { return i % 2 == 0; }

inline MovementMask make_mask(std::initializer_list<MovementId> ids) {
  MovementMask mask;
  for (MovementId id : ids) mask.set(index(id));
  return mask;
}

inline std::string mask_to_string(const MovementMask& mask) {
  std::string out;
  for (std::size_t i = 0; i < kMovements; ++i) {
    if (!mask.test(i)) continue;
    if (!out.empty()) out += ',';
    out += kMovementNames[i];
  }
  return out;
}

}  // namespace unitsa::sim
