#pragma once

#include <vector>

#include "slowrec/partition.hpp"

namespace slowrec::detail {

// Preimage under f^T along the connection of point i of a point y near its target.
double pullback(const PiecewiseMap& map, std::size_t i, const std::vector<std::size_t>& path,
                double y);

// Sorted cells for the given depth thresholds (rho[i] per point) down to p_max.
std::vector<Atom> layout_cells(const PiecewiseMap& map, const GridSequence& seq,
                               const std::vector<long>& rho, long p_max);

double estimate_K2(const std::vector<Atom>& cells, const PiecewiseMap& map,
                   const GridSequence& seq);

// Index of the escape cell adjacent to the tail of point i.
std::size_t escape_of(const std::vector<Atom>& cells, const PiecewiseMap& map, std::size_t i);

double plus_length(const std::vector<Atom>& cells, std::size_t k);

}  // namespace slowrec::detail
