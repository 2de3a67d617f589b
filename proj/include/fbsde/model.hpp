#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbsde/networks.hpp"

namespace fbsde::nets {

enum class ModelKind : uint32_t { kMlp = 0, kMscale = 1, kBsdeStack = 2 };

// Owner of one trainable parameter set, whatever its architecture. The
// optimizer and checkpoint code only see the flat tensor list, always in
// the same order for a given architecture.
struct Model {
  ModelKind kind = ModelKind::kMlp;
  MlpParams mlp;
  MscaleParams mscale;
  BsdeStackParams bsde;

  static Model make_mlp(MlpParams p);
  static Model make_mscale(MscaleParams p);
  static Model make_bsde(BsdeStackParams p);

  // Spatial dimension d the model consumes.
  int state_dim() const;
  std::vector<ad::Tensor*> tensors();
  std::vector<const ad::Tensor*> tensors() const;
  std::size_t parameter_count() const;
  // Hash of the architecture metadata (not the values); checkpoints carry
  // it so evaluation can reject mismatched networks.
  uint64_t arch_hash() const;
  std::string kind_name() const;
};

// Optimizer state persisted next to the parameters so interrupted runs
// resume on the exact trajectory.
struct TrainState {
  bool present = false;
  long step = 0;
  std::vector<ad::Tensor> first_moment;
  std::vector<ad::Tensor> second_moment;
};

// Binary checkpoint with an embedded format-version tag. Round-trips are
// bit-exact. Throws IoError on malformed files and unreadable paths.
void save_checkpoint(const std::string& path, const Model& model,
                     const TrainState* train_state = nullptr);
Model load_checkpoint(const std::string& path,
                      TrainState* train_state = nullptr);

}  // namespace fbsde::nets
