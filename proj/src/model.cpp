#include "fbsde/model.hpp"

#include <cstring>
#include <fstream>

#include "fbsde/errors.hpp"

namespace fbsde::nets {

namespace {

constexpr char kMagic[4] = {'F', 'B', 'C', 'K'};
constexpr uint32_t kFormatVersion = 1;

uint64_t fnv1a(uint64_t h, const void* data, std::size_t n) {
  const auto* p = (const unsigned char*)data;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

uint64_t fnv1a_u32(uint64_t h, uint32_t v) { return fnv1a(h, &v, sizeof v); }
uint64_t fnv1a_f64(uint64_t h, double v) { return fnv1a(h, &v, sizeof v); }

uint64_t hash_mlp_config(uint64_t h, const MlpConfig& c) {
  h = fnv1a_u32(h, (uint32_t)c.input_dim);
  h = fnv1a_u32(h, (uint32_t)c.hidden_layers);
  h = fnv1a_u32(h, (uint32_t)c.hidden_width);
  h = fnv1a_u32(h, (uint32_t)c.output_dim);
  h = fnv1a_u32(h, (uint32_t)c.activation);
  return h;
}

void collect(const MlpParams& p, std::vector<const ad::Tensor*>& out) {
  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    out.push_back(&p.weights[k]);
    out.push_back(&p.biases[k]);
  }
}

void collect(MlpParams& p, std::vector<ad::Tensor*>& out) {
  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    out.push_back(&p.weights[k]);
    out.push_back(&p.biases[k]);
  }
}

}  // namespace

Model Model::make_mlp(MlpParams p) {
  Model m;
  m.kind = ModelKind::kMlp;
  m.mlp = std::move(p);
  return m;
}

Model Model::make_mscale(MscaleParams p) {
  Model m;
  m.kind = ModelKind::kMscale;
  m.mscale = std::move(p);
  return m;
}

Model Model::make_bsde(BsdeStackParams p) {
  Model m;
  m.kind = ModelKind::kBsdeStack;
  m.bsde = std::move(p);
  return m;
}

int Model::state_dim() const {
  switch (kind) {
    case ModelKind::kMlp:
      return mlp.config.input_dim - 1;
    case ModelKind::kMscale:
      return mscale.config.subnet.input_dim - 1;
    case ModelKind::kBsdeStack:
      return bsde.subnet.input_dim;
  }
  return 0;
}

std::vector<ad::Tensor*> Model::tensors() {
  std::vector<ad::Tensor*> out;
  switch (kind) {
    case ModelKind::kMlp:
      collect(mlp, out);
      break;
    case ModelKind::kMscale:
      for (auto& sn : mscale.subnets) collect(sn, out);
      out.push_back(&mscale.combo_w);
      out.push_back(&mscale.combo_b);
      break;
    case ModelKind::kBsdeStack:
      out.push_back(&bsde.y0);
      out.push_back(&bsde.z0);
      for (auto& sn : bsde.subnets) collect(sn, out);
      break;
  }
  return out;
}

std::vector<const ad::Tensor*> Model::tensors() const {
  std::vector<const ad::Tensor*> out;
  switch (kind) {
    case ModelKind::kMlp:
      collect(mlp, out);
      break;
    case ModelKind::kMscale:
      for (const auto& sn : mscale.subnets) collect(sn, out);
      out.push_back(&mscale.combo_w);
      out.push_back(&mscale.combo_b);
      break;
    case ModelKind::kBsdeStack:
      out.push_back(&bsde.y0);
      out.push_back(&bsde.z0);
      for (const auto& sn : bsde.subnets) collect(sn, out);
      break;
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto* t : tensors()) n += t->size();
  return n;
}

uint64_t Model::arch_hash() const {
  uint64_t h = 0xCBF29CE484222325ull;
  h = fnv1a_u32(h, (uint32_t)kind);
  switch (kind) {
    case ModelKind::kMlp:
      h = hash_mlp_config(h, mlp.config);
      break;
    case ModelKind::kMscale:
      h = hash_mlp_config(h, mscale.config.subnet);
      h = fnv1a_u32(h, (uint32_t)mscale.config.n_subnets());
      for (const auto& s : mscale.config.scales)
        for (double v : s) h = fnv1a_f64(h, v);
      break;
    case ModelKind::kBsdeStack:
      h = hash_mlp_config(h, bsde.subnet);
      h = fnv1a_u32(h, (uint32_t)bsde.n_steps);
      break;
  }
  return h;
}

std::string Model::kind_name() const {
  switch (kind) {
    case ModelKind::kMlp:
      return "mlp";
    case ModelKind::kMscale:
      return "mscale";
    case ModelKind::kBsdeStack:
      return "deep-bsde";
  }
  return "?";
}

namespace {

void write_u32(std::ostream& os, uint32_t v) {
  os.write((const char*)&v, sizeof v);
}
void write_u64(std::ostream& os, uint64_t v) {
  os.write((const char*)&v, sizeof v);
}
void write_f64(std::ostream& os, double v) {
  os.write((const char*)&v, sizeof v);
}

uint32_t read_u32(std::istream& is) {
  uint32_t v;
  is.read((char*)&v, sizeof v);
  if (!is) throw IoError("checkpoint: truncated file");
  return v;
}
uint64_t read_u64(std::istream& is) {
  uint64_t v;
  is.read((char*)&v, sizeof v);
  if (!is) throw IoError("checkpoint: truncated file");
  return v;
}
double read_f64(std::istream& is) {
  double v;
  is.read((char*)&v, sizeof v);
  if (!is) throw IoError("checkpoint: truncated file");
  return v;
}

void write_mlp_config(std::ostream& os, const MlpConfig& c) {
  write_u32(os, (uint32_t)c.input_dim);
  write_u32(os, (uint32_t)c.hidden_layers);
  write_u32(os, (uint32_t)c.hidden_width);
  write_u32(os, (uint32_t)c.output_dim);
  write_u32(os, (uint32_t)c.activation);
}

MlpConfig read_mlp_config(std::istream& is) {
  MlpConfig c;
  c.input_dim = (int)read_u32(is);
  c.hidden_layers = (int)read_u32(is);
  c.hidden_width = (int)read_u32(is);
  c.output_dim = (int)read_u32(is);
  c.activation = (Activation)read_u32(is);
  return c;
}

void write_tensor(std::ostream& os, const ad::Tensor& t) {
  write_u32(os, (uint32_t)t.rows());
  write_u32(os, (uint32_t)t.cols());
  os.write((const char*)t.data(), t.size() * sizeof(double));
}

ad::Tensor read_tensor(std::istream& is) {
  const int rows = (int)read_u32(is);
  const int cols = (int)read_u32(is);
  if (rows < 1 || cols < 1 || (long)rows * cols > (1L << 30))
    throw IoError("checkpoint: implausible tensor shape");
  ad::Tensor t(rows, cols);
  is.read((char*)t.data(), t.size() * sizeof(double));
  if (!is) throw IoError("checkpoint: truncated tensor data");
  return t;
}

MlpParams empty_mlp(const MlpConfig& cfg) {
  MlpParams p;
  p.config = cfg;
  p.weights.resize(cfg.hidden_layers + 1);
  p.biases.resize(cfg.hidden_layers + 1);
  return p;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model,
                     const TrainState* train_state) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, kFormatVersion);
  write_u32(os, (uint32_t)model.kind);
  switch (model.kind) {
    case ModelKind::kMlp:
      write_mlp_config(os, model.mlp.config);
      break;
    case ModelKind::kMscale: {
      write_mlp_config(os, model.mscale.config.subnet);
      write_u32(os, (uint32_t)model.mscale.config.n_subnets());
      for (const auto& s : model.mscale.config.scales)
        for (double v : s) write_f64(os, v);
      break;
    }
    case ModelKind::kBsdeStack:
      write_mlp_config(os, model.bsde.subnet);
      write_u32(os, (uint32_t)model.bsde.n_steps);
      break;
  }
  write_u64(os, model.arch_hash());

  const auto tensors = model.tensors();
  write_u64(os, tensors.size());
  for (const auto* t : tensors) write_tensor(os, *t);

  if (train_state && train_state->present) {
    write_u32(os, 1);
    write_u64(os, (uint64_t)train_state->step);
    for (const auto& t : train_state->first_moment) write_tensor(os, t);
    for (const auto& t : train_state->second_moment) write_tensor(os, t);
  } else {
    write_u32(os, 0);
  }
  if (!os) throw IoError("checkpoint: write failed: " + path);
}

Model load_checkpoint(const std::string& path, TrainState* train_state) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  const uint32_t version = read_u32(is);
  if (version != kFormatVersion)
    throw IoError("checkpoint: unsupported format version " +
                  std::to_string(version));

  Model model;
  model.kind = (ModelKind)read_u32(is);
  switch (model.kind) {
    case ModelKind::kMlp:
      model.mlp = empty_mlp(read_mlp_config(is));
      break;
    case ModelKind::kMscale: {
      MscaleConfig cfg;
      cfg.subnet = read_mlp_config(is);
      const int n = (int)read_u32(is);
      for (int i = 0; i < n; ++i) {
        std::vector<double> s(cfg.subnet.input_dim);
        for (auto& v : s) v = read_f64(is);
        cfg.scales.push_back(std::move(s));
      }
      model.mscale.config = cfg;
      for (int i = 0; i < n; ++i)
        model.mscale.subnets.push_back(empty_mlp(cfg.subnet));
      break;
    }
    case ModelKind::kBsdeStack: {
      model.bsde.subnet = read_mlp_config(is);
      model.bsde.n_steps = (int)read_u32(is);
      for (int i = 1; i < model.bsde.n_steps; ++i)
        model.bsde.subnets.push_back(empty_mlp(model.bsde.subnet));
      break;
    }
    default:
      throw IoError("checkpoint: unknown model kind");
  }
  const uint64_t stored_hash = read_u64(is);

  const uint64_t count = read_u64(is);
  auto slots = model.tensors();
  if (count != slots.size())
    throw IoError("checkpoint: tensor count mismatch");
  for (auto* slot : slots) *slot = read_tensor(is);

  if (model.arch_hash() != stored_hash)
    throw IoError("checkpoint: architecture hash mismatch");

  const uint32_t has_state = read_u32(is);
  if (train_state) {
    train_state->present = has_state != 0;
    train_state->first_moment.clear();
    train_state->second_moment.clear();
    if (has_state) {
      train_state->step = (long)read_u64(is);
      for (std::size_t i = 0; i < slots.size(); ++i)
        train_state->first_moment.push_back(read_tensor(is));
      for (std::size_t i = 0; i < slots.size(); ++i)
        train_state->second_moment.push_back(read_tensor(is));
    }
  }
  return model;
}

}  // namespace fbsde::nets
