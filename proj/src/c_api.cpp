#include "fbsde.h"

#include <cstring>
#include <string>

#include "fbsde/errors.hpp"
#include "fbsde/run_commands.hpp"
#include "fbsde/version.hpp"

struct fbsde_config {
  fbsde::run::RunConfig impl;
};

namespace {

thread_local std::string g_last_error;

fbsde_status fail(fbsde_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

template <typename Fn>
fbsde_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return FBSDE_OK;
  } catch (const fbsde::ConfigError& e) {
    return fail(FBSDE_ERR_CONFIG, e.what());
  } catch (const fbsde::ShapeError& e) {
    return fail(FBSDE_ERR_CONFIG, e.what());
  } catch (const fbsde::NumericError& e) {
    return fail(FBSDE_ERR_NUMERIC, e.what());
  } catch (const fbsde::IoError& e) {
    return fail(FBSDE_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(FBSDE_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(FBSDE_ERR_INTERNAL, "unknown error");
  }
}

}  // namespace

extern "C" {

const char* fbsde_version(void) { return FBSDE_VERSION; }

const char* fbsde_last_error(void) { return g_last_error.c_str(); }

fbsde_status fbsde_config_create(fbsde_config** out) {
  if (!out) return fail(FBSDE_ERR_CONFIG, "config_create: null output");
  return guarded([&] { *out = new fbsde_config(); });
}

void fbsde_config_destroy(fbsde_config* config) { delete config; }

fbsde_status fbsde_config_load_file(fbsde_config* config, const char* path) {
  if (!config || !path)
    return fail(FBSDE_ERR_CONFIG, "config_load_file: null argument");
  return guarded([&] {
    auto loaded = fbsde::run::RunConfig::from_file(path);
    // file entries override the current values, preset bundles first
    for (const auto& [k, v] : loaded.entries())
      if (k == "preset" && !v.empty()) config->impl.set(k, v);
    for (const auto& [k, v] : loaded.entries())
      if (k != "preset") config->impl.set(k, v);
  });
}

fbsde_status fbsde_config_set(fbsde_config* config, const char* key,
                              const char* value) {
  if (!config || !key || !value)
    return fail(FBSDE_ERR_CONFIG, "config_set: null argument");
  return guarded([&] { config->impl.set(key, value); });
}

fbsde_status fbsde_config_get(const fbsde_config* config, const char* key,
                              char* buf, size_t buf_len) {
  if (!config || !key || !buf || buf_len == 0)
    return fail(FBSDE_ERR_CONFIG, "config_get: null argument");
  return guarded([&] {
    const std::string& v = config->impl.get(key);
    std::strncpy(buf, v.c_str(), buf_len - 1);
    buf[buf_len - 1] = '\0';
  });
}

fbsde_status fbsde_config_validate(const fbsde_config* config) {
  if (!config) return fail(FBSDE_ERR_CONFIG, "config_validate: null config");
  return guarded([&] { config->impl.validate(); });
}

fbsde_status fbsde_run_train(const fbsde_config* config, const char* out_dir) {
  if (!config || !out_dir)
    return fail(FBSDE_ERR_CONFIG, "run_train: null argument");
  return guarded([&] { fbsde::run::cmd_train(config->impl, out_dir); });
}

fbsde_status fbsde_run_evaluate(const fbsde_config* config,
                                const char* checkpoint_path,
                                const char* out_dir) {
  if (!config || !out_dir)
    return fail(FBSDE_ERR_CONFIG, "run_evaluate: null argument");
  return guarded([&] {
    fbsde::run::cmd_evaluate(config->impl,
                             checkpoint_path ? checkpoint_path : "", out_dir);
  });
}

fbsde_status fbsde_run_convergence(const fbsde_config* config,
                                   const int* n_list, int n_count,
                                   int extrapolate, const char* out_dir) {
  if (!config || !n_list || n_count < 1 || !out_dir)
    return fail(FBSDE_ERR_CONFIG, "run_convergence: null argument");
  return guarded([&] {
    fbsde::run::cmd_convergence(config->impl,
                                std::vector<int>(n_list, n_list + n_count),
                                extrapolate != 0, out_dir);
  });
}

fbsde_status fbsde_run_mscale_compare(const fbsde_config* config,
                                      const char* out_dir) {
  if (!config || !out_dir)
    return fail(FBSDE_ERR_CONFIG, "run_mscale_compare: null argument");
  return guarded(
      [&] { fbsde::run::cmd_mscale_compare(config->impl, out_dir); });
}

fbsde_status fbsde_run_paths_dump(const fbsde_config* config,
                                  const char* checkpoint_path, int n_paths,
                                  const char* out_csv) {
  if (!config || !out_csv)
    return fail(FBSDE_ERR_CONFIG, "run_paths_dump: null argument");
  return guarded([&] {
    fbsde::run::cmd_paths_dump(config->impl,
                               checkpoint_path ? checkpoint_path : "",
                               n_paths, out_csv);
  });
}

}  // extern "C"
