#pragma once

#include <cstdint>

#include "fbttr/data/dataset.hpp"

namespace fbttr::data {

enum class Scheme { Iid, LabelSkew, ByColumn };

Scheme parse_scheme(const std::string& text);
const char* to_string(Scheme scheme);

struct PartitionPlan {
  Scheme scheme = Scheme::Iid;
  std::size_t client_count = 1;  // ignored by ByColumn unless nonzero, then checked
  std::uint64_t seed = 0;
  double alpha = 0.5;            // Dirichlet concentration for LabelSkew
};

// Sample indices per client, each list ascending. Every sample lands in
// exactly one client and no client is empty.
std::vector<std::vector<std::size_t>> partition_indices(const Dataset& ds, const PartitionPlan& plan);

std::vector<Dataset> partition(const Dataset& ds, const PartitionPlan& plan);

}  // namespace fbttr::data
