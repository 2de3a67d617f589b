#pragma once

#include <string>
#include <vector>

#include "fbsde/evaluation.hpp"
#include "fbsde/training.hpp"

namespace fbsde::run {

// Deterministic artifact writers: identical inputs produce byte-identical
// files. Every file embeds the config hash and seed in a comment line.

struct ArtifactStamp {
  std::string config_hash;
  uint64_t seed = 0;
};

void write_loss_csv(const std::string& path,
                    const std::vector<training::HistoryRow>& history,
                    const ArtifactStamp& stamp);

void write_error_report_csv(const std::string& path,
                            const evaluation::ErrorReport& report,
                            const ArtifactStamp& stamp);

void write_convergence_csv(const std::string& path,
                           const std::vector<evaluation::ConvergenceRow>& rows,
                           const ArtifactStamp& stamp);

// side-by-side station errors of two architectures
void write_compare_csv(const std::string& path,
                       const evaluation::ErrorReport& plain,
                       const evaluation::ErrorReport& mscale,
                       const ArtifactStamp& stamp);

// Minimal SVG polyline plot; y is log-scaled when log_y is set (zero or
// negative samples are clamped to the smallest positive one).
struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<PlotSeries>& series, bool log_y,
                    const ArtifactStamp& stamp);

// formats a double like the CSV writers do
std::string format_double(double v);

}  // namespace fbsde::run
