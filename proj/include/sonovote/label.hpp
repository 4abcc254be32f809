#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sonovote {

// Fixed ordinal encoding: normal=0, benign=1, malignant=2.
enum class ClassLabel : int { normal = 0, benign = 1, malignant = 2 };

inline constexpr int kNumClasses = 3;

inline constexpr std::array<ClassLabel, kNumClasses> all_labels() {
  return {ClassLabel::normal, ClassLabel::benign, ClassLabel::malignant};
}

inline constexpr std::string_view class_name(ClassLabel label) {
  switch (label) {
    case ClassLabel::normal: return "normal";
    case ClassLabel::benign: return "benign";
    case ClassLabel::malignant: return "malignant";
  }
  return "?";
}

inline ClassLabel parse_class(std::string_view name) {
  for (ClassLabel label : all_labels()) {
    if (class_name(label) == name) return label;
  }
  throw std::invalid_argument("unknown class name: " + std::string(name));
}

inline constexpr int label_index(ClassLabel label) {
  return static_cast<int>(label);
}

inline ClassLabel label_from_index(int index) {
  if (index < 0 || index >= kNumClasses) {
    throw std::invalid_argument("class index out of range: " +
                                std::to_string(index));
  }
  return static_cast<ClassLabel>(index);
}

}  // namespace sonovote
