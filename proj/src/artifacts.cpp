#include "fbsde/artifacts.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fbsde/errors.hpp"

namespace fbsde::run {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);  // fixed newlines everywhere
  if (!os) throw IoError("artifact: cannot open for writing: " + path);
  return os;
}

void stamp_line(std::ofstream& os, const ArtifactStamp& stamp) {
  os << "# config_hash=" << stamp.config_hash << " seed=" << stamp.seed
     << "\n";
}

}  // namespace

std::string format_double(double v) {
  // shortest representation that round-trips; deterministic
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_loss_csv(const std::string& path,
                    const std::vector<training::HistoryRow>& history,
                    const ArtifactStamp& stamp) {
  auto os = open_out(path);
  stamp_line(os, stamp);
  os << "step,lr,pathwise,terminal_value,terminal_grad,total\n";
  for (const auto& row : history) {
    os << row.step << ',' << format_double(row.lr) << ','
       << format_double(row.pathwise) << ','
       << format_double(row.terminal_value) << ','
       << format_double(row.terminal_grad) << ','
       << format_double(row.total) << "\n";
  }
  if (!os) throw IoError("artifact: write failed: " + path);
}

void write_error_report_csv(const std::string& path,
                            const evaluation::ErrorReport& report,
                            const ArtifactStamp& stamp) {
  auto os = open_out(path);
  stamp_line(os, stamp);
  os << "# n_paths=" << report.n_paths
     << " overall_max_mean=" << format_double(report.overall_max_mean)
     << " y0_rel_error=" << format_double(report.y0_rel_error) << "\n";
  os << "station,t,mean,sd,mean_plus_2sd\n";
  for (std::size_t n = 0; n < report.t.size(); ++n) {
    os << n << ',' << format_double(report.t[n]) << ','
       << format_double(report.mean[n]) << ',' << format_double(report.sd[n])
       << ',' << format_double(report.mean_plus_2sd(n)) << "\n";
  }
  if (!os) throw IoError("artifact: write failed: " + path);
}

void write_convergence_csv(const std::string& path,
                           const std::vector<evaluation::ConvergenceRow>& rows,
                           const ArtifactStamp& stamp) {
  auto os = open_out(path);
  stamp_line(os, stamp);
  os << "n_steps,raw_error,extrapolated_error\n";
  for (const auto& row : rows) {
    os << row.n_steps << ',' << format_double(row.raw_error) << ',';
    if (row.extrapolated_error) os << format_double(*row.extrapolated_error);
    os << "\n";
  }
  if (!os) throw IoError("artifact: write failed: " + path);
}

void write_compare_csv(const std::string& path,
                       const evaluation::ErrorReport& plain,
                       const evaluation::ErrorReport& mscale,
                       const ArtifactStamp& stamp) {
  if (plain.t.size() != mscale.t.size())
    throw ShapeError("compare: reports cover different grids");
  auto os = open_out(path);
  stamp_line(os, stamp);
  os << "# plain_overall_max_mean=" << format_double(plain.overall_max_mean)
     << " mscale_overall_max_mean=" << format_double(mscale.overall_max_mean)
     << "\n";
  os << "station,t,mean_plain,sd_plain,mean_mscale,sd_mscale\n";
  for (std::size_t n = 0; n < plain.t.size(); ++n) {
    os << n << ',' << format_double(plain.t[n]) << ','
       << format_double(plain.mean[n]) << ',' << format_double(plain.sd[n])
       << ',' << format_double(mscale.mean[n]) << ','
       << format_double(mscale.sd[n]) << "\n";
  }
  if (!os) throw IoError("artifact: write failed: " + path);
}

namespace {

constexpr double kWidth = 760.0, kHeight = 480.0;
constexpr double kLeft = 70.0, kRight = 20.0, kTop = 40.0, kBottom = 50.0;

const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                               "#ff7f0e", "#8c564b"};

}  // namespace

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<PlotSeries>& series, bool log_y,
                    const ArtifactStamp& stamp) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  double ypos_min = 1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
      if (s.y[i] > 0.0) ypos_min = std::min(ypos_min, s.y[i]);
    }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (log_y) {
    if (ypos_min == 1e300) ypos_min = 1e-16;
    ymin = ypos_min;
    if (ymax <= ymin) ymax = ymin * 10.0;
  } else if (ymax <= ymin) {
    ymax = ymin + 1.0;
  }

  auto ty = [&](double y) {
    double v = y;
    if (log_y) v = std::log10(std::max(y, ymin));
    const double lo = log_y ? std::log10(ymin) : ymin;
    const double hi = log_y ? std::log10(ymax) : ymax;
    return kHeight - kBottom -
           (v - lo) / (hi - lo) * (kHeight - kTop - kBottom);
  };
  auto tx = [&](double x) {
    return kLeft + (x - xmin) / (xmax - xmin) * (kWidth - kLeft - kRight);
  };

  auto os = open_out(path);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<!-- config_hash=" << stamp.config_hash << " seed=" << stamp.seed
     << " -->\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
     << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
     << kHeight << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"15\">"
     << title << "</text>\n";

  // axes
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom
     << "\" x2=\"" << kWidth - kRight << "\" y2=\"" << kHeight - kBottom
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
     << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\""
     << kHeight - 12
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"12\">"
     << x_label << "</text>\n";
  os << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"12\" transform=\"rotate(-90 16 "
     << (kTop + kHeight - kBottom) / 2 << ")\">" << y_label << "</text>\n";

  // y ticks (decades when log, quartiles otherwise)
  if (log_y) {
    const int lo = (int)std::floor(std::log10(ymin));
    const int hi = (int)std::ceil(std::log10(ymax));
    for (int e = lo; e <= hi; ++e) {
      const double y = std::pow(10.0, e);
      if (y < ymin * 0.999 || y > ymax * 1.001) continue;
      os << "<line x1=\"" << kLeft << "\" y1=\"" << ty(y) << "\" x2=\""
         << kWidth - kRight << "\" y2=\"" << ty(y)
         << "\" stroke=\"#dddddd\"/>\n";
      os << "<text x=\"" << kLeft - 6 << "\" y=\"" << ty(y) + 4
         << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
            "font-size=\"10\">1e"
         << e << "</text>\n";
    }
  } else {
    for (int k = 0; k <= 4; ++k) {
      const double y = ymin + (ymax - ymin) * k / 4.0;
      os << "<text x=\"" << kLeft - 6 << "\" y=\"" << ty(y) + 4
         << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
            "font-size=\"10\">"
         << format_double(y) << "</text>\n";
    }
  }
  for (int k = 0; k <= 4; ++k) {
    const double x = xmin + (xmax - xmin) * k / 4.0;
    os << "<text x=\"" << tx(x) << "\" y=\"" << kHeight - kBottom + 16
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"10\">"
       << format_double(x) << "</text>\n";
  }

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kSeriesColors[s % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (i) os << ' ';
      os << format_double(tx(series[s].x[i])) << ','
         << format_double(ty(series[s].y[i]));
    }
    os << "\"/>\n";
    os << "<text x=\"" << kWidth - kRight - 8 << "\" y=\""
       << kTop + 16.0 * (double)s + 6
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
          "font-size=\"11\" fill=\""
       << color << "\">" << series[s].label << "</text>\n";
  }
  os << "</svg>\n";
  if (!os) throw IoError("artifact: write failed: " + path);
}

}  // namespace fbsde::run
