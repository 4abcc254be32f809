#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sonovote/label.hpp"
#include "sonovote/metrics.hpp"

namespace sonovote {

// Hand-rolled SVG plots. These are presentation artifacts only; every number
// they show is also in the CSV/JSON outputs, which are what tests read.

namespace detail {

inline const char* plot_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};
  return palette[i % 6];
}

inline std::string fmt3(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::fixed << v;
  return s.str();
}

}  // namespace detail

inline void write_roc_svg(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, RocCurve>>& curves,
    const std::string& title) {
  const int margin = 56, plot = 420;
  const int width = margin + plot + 150, height = margin + plot + 40;
  auto px = [&](double fpr) { return margin + fpr * plot; };
  auto py = [&](double tpr) { return margin + (1.0 - tpr) * plot; };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "' font-family='sans-serif'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << margin << "' y='24' font-size='16'>" << title
      << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double t = i / 4.0;
    svg << "<line x1='" << px(t) << "' y1='" << py(0) << "' x2='" << px(t)
        << "' y2='" << py(1) << "' stroke='#ddd'/>\n"
        << "<line x1='" << px(0) << "' y1='" << py(t) << "' x2='" << px(1)
        << "' y2='" << py(t) << "' stroke='#ddd'/>\n"
        << "<text x='" << px(t) - 10 << "' y='" << py(0) + 18
        << "' font-size='11'>" << detail::fmt3(t) << "</text>\n"
        << "<text x='" << margin - 40 << "' y='" << py(t) + 4
        << "' font-size='11'>" << detail::fmt3(t) << "</text>\n";
  }
  svg << "<line x1='" << px(0) << "' y1='" << py(0) << "' x2='" << px(1)
      << "' y2='" << py(1) << "' stroke='#aaa' stroke-dasharray='4 4'/>\n"
      << "<text x='" << margin + plot / 2 - 60 << "' y='" << height - 6
      << "' font-size='13'>false positive rate</text>\n"
      << "<text x='14' y='" << margin + plot / 2
      << "' font-size='13' transform='rotate(-90 14 " << margin + plot / 2
      << ")'>true positive rate</text>\n";

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& [name, curve] = curves[i];
    svg << "<polyline fill='none' stroke='" << detail::plot_color(i)
        << "' stroke-width='1.8' points='";
    for (const auto& p : curve.points) svg << px(p.fpr) << ',' << py(p.tpr) << ' ';
    svg << "'/>\n";
    const int ly = margin + 16 + static_cast<int>(i) * 20;
    svg << "<rect x='" << margin + plot + 12 << "' y='" << ly - 10
        << "' width='12' height='12' fill='" << detail::plot_color(i)
        << "'/>\n<text x='" << margin + plot + 30 << "' y='" << ly
        << "' font-size='12'>" << name << " (AUC " << detail::fmt3(curve.auc)
        << ")</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << svg.str();
}

inline void write_confusion_svg(const std::filesystem::path& path,
                                const ConfusionMatrix& cm,
                                const std::string& title) {
  const int cell = 90, margin = 110, top = 70;
  const int width = margin + kNumClasses * cell + 30;
  const int height = top + kNumClasses * cell + 50;
  std::uint64_t max_count = 1;
  for (int r = 0; r < kNumClasses; ++r) {
    for (int c = 0; c < kNumClasses; ++c) {
      max_count = std::max(max_count, cm.counts[r][c]);
    }
  }

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "' font-family='sans-serif'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << margin << "' y='22' font-size='15'>" << title
      << "</text>\n"
      << "<text x='" << margin + kNumClasses * cell / 2 - 34 << "' y='"
      << top - 28 << "' font-size='12'>predicted</text>\n"
      << "<text x='16' y='" << top + kNumClasses * cell / 2
      << "' font-size='12' transform='rotate(-90 16 "
      << top + kNumClasses * cell / 2 << ")'>true</text>\n";

  for (ClassLabel label : all_labels()) {
    const int i = label_index(label);
    svg << "<text x='" << margin + i * cell + 12 << "' y='" << top - 8
        << "' font-size='12'>" << class_name(label) << "</text>\n"
        << "<text x='" << 34 << "' y='" << top + i * cell + cell / 2 + 4
        << "' font-size='12'>" << class_name(label) << "</text>\n";
  }
  for (int r = 0; r < kNumClasses; ++r) {
    for (int c = 0; c < kNumClasses; ++c) {
      const double frac =
          static_cast<double>(cm.counts[r][c]) / static_cast<double>(max_count);
      const int shade = 255 - static_cast<int>(frac * 160);
      svg << "<rect x='" << margin + c * cell << "' y='" << top + r * cell
          << "' width='" << cell << "' height='" << cell << "' fill='rgb("
          << shade << ',' << shade << ",255)' stroke='#888'/>\n"
          << "<text x='" << margin + c * cell + cell / 2 - 10 << "' y='"
          << top + r * cell + cell / 2 + 5 << "' font-size='14'>"
          << cm.counts[r][c] << "</text>\n";
    }
  }
  svg << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << svg.str();
}

}  // namespace sonovote
