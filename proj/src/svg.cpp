#include <algorithm>
#include <cmath>
#include <fstream>

#include "qtune/harness.hpp"

namespace qtune::harness {

// Mean best-so-far per optimizer, one polyline each.
void write_convergence_svg(const CompareReport& report, const std::filesystem::path& path) {
  constexpr int kWidth = 720, kHeight = 440;
  constexpr int kLeft = 70, kRight = 30, kTop = 30, kBottom = 50;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf"};

  std::vector<std::vector<double>> means;
  std::size_t rounds = 0;
  for (const auto& row : report.rows) {
    if (row.traces.empty()) continue;
    rounds = std::max(rounds, row.traces.front().size());
    std::vector<double> mean(row.traces.front().size(), 0.0);
    for (const auto& tr : row.traces)
      for (std::size_t i = 0; i < tr.size(); ++i) mean[i] += tr[i];
    for (auto& v : mean) v /= static_cast<double>(row.traces.size());
    means.push_back(std::move(mean));
  }

  double lo = 0.0, hi = 1.0;
  bool first = true;
  for (const auto& m : means)
    for (double v : m) {
      if (first) {
        lo = hi = v;
        first = false;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (hi == lo) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  auto x_of = [&](std::size_t round) {
    return kLeft + (kWidth - kLeft - kRight) * static_cast<double>(round) /
                       static_cast<double>(std::max<std::size_t>(1, rounds - 1));
  };
  auto y_of = [&](double v) {
    return kTop + (kHeight - kTop - kBottom) * (1.0 - (v - lo) / (hi - lo));
  };

  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << (kHeight - kBottom) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << (kHeight - kBottom) << "\" x2=\""
      << (kWidth - kRight) << "\" y2=\"" << (kHeight - kBottom) << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (kWidth / 2) << "\" y=\"" << (kHeight - 12)
      << "\" text-anchor=\"middle\" font-size=\"14\">round</text>\n";
  out << "<text x=\"18\" y=\"" << (kHeight / 2)
      << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 "
      << (kHeight / 2) << ")\">mean best " << report.objective << "</text>\n";

  for (std::size_t i = 0; i < means.size(); ++i) {
    const char* color = kColors[i % (sizeof(kColors) / sizeof(kColors[0]))];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t r = 0; r < means[i].size(); ++r)
      out << x_of(r) << "," << y_of(means[i][r]) << " ";
    out << "\"/>\n";
    const int ly = kTop + 18 * static_cast<int>(i);
    out << "<line x1=\"" << (kWidth - kRight - 150) << "\" y1=\"" << ly << "\" x2=\""
        << (kWidth - kRight - 125) << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << (kWidth - kRight - 118) << "\" y=\"" << (ly + 4)
        << "\" font-size=\"13\">" << report.rows[i].optimizer << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace qtune::harness
