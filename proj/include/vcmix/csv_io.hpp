#pragma once

#include <string>

#include "vcmix/dataset.hpp"

namespace vcmix {

/// Formats a double with 17 significant digits (round-trip exact).
std::string format_double(double v);

/// Loads a dataset from CSV with header
///   cluster_id,y,u,x1,...,xp,z1,...,zq
/// p and q are inferred from the header; z values must be identical
/// within each cluster_id; clusters appear in order of first appearance.
/// Throws SchemaError, ParseError or InconsistentClusterCovariate.
ClusterDataset load_csv(const std::string& path);

/// Writes a dataset in the load_csv schema at full precision.
void save_csv(const ClusterDataset& data, const std::string& path);

}  // namespace vcmix
