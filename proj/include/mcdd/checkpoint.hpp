#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "mcdd/baselines.hpp"
#include "mcdd/dataset.hpp"
#include "mcdd/dm_head.hpp"
#include "mcdd/nn.hpp"
#include "mcdd/soft_boundary.hpp"

namespace mcdd {

enum class Method {
    kDeepMcdd,
    kSoftMcdd,
    kSoftmaxMsp,
    kMahalanobis,
    kDeepSvdd,
    kEuclidCenter,
};

std::string to_string(Method method);
Method method_from_string(const std::string& name);

/// Does the method produce class predictions (everything but the one-class
/// detector)?
bool method_classifies(Method method);

/// A trained model with everything needed to score new data: the extractor,
/// the method-specific head, the training configuration and the
/// normalization fitted on the training split.
struct Checkpoint {
    Method method = Method::kDeepMcdd;
    MLPParams network;
    std::optional<DMLayerParams> dm_head;
    std::optional<SphereParams> spheres;
    std::optional<SoftmaxHeadParams> softmax_head;
    std::optional<MahalanobisStats> mahalanobis;
    std::optional<SVDDParams> svdd;
    std::optional<Matrix> euclid_centers;
    TrainConfig train_config;
    NormalizationStats normalization;
    std::vector<std::string> class_names;
};

/// Writes the checkpoint as versioned JSON. Every float survives a
/// save/load round trip bit-exactly.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Rejects unknown versions and malformed payloads.
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace mcdd
