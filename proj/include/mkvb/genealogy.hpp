#pragma once

// Ulam-Harris-Neveu labels and finite labeled point configurations.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mkvb {

/// Genealogy word k = k_1 ... k_n with every k_i >= 1. The empty word is the
/// root label. Offspring of k are k.1, ..., k.l.
class Label {
 public:
  Label() = default;
  Label(std::initializer_list<std::uint32_t> word);
  explicit Label(std::vector<std::uint32_t> word);

  static Label root() { return Label{}; }

  /// Parses "1.2.1"; the empty string is the root.
  static Label parse(std::string_view text);

  bool is_root() const noexcept { return word_.empty(); }
  std::size_t depth() const noexcept { return word_.size(); }
  std::span<const std::uint32_t> word() const noexcept { return word_; }
  std::uint32_t back() const;

  /// k.i for a single positive index i.
  Label child(std::uint32_t i) const;

  std::string to_string() const;

  friend bool operator==(const Label&, const Label&) = default;
  /// Lexicographic order; a strict ancestor sorts before all its descendants
  /// and every descendant block is contiguous.
  friend std::strong_ordering operator<=>(const Label& a, const Label& b) {
    return std::lexicographical_compare_three_way(a.word_.begin(), a.word_.end(),
                                                  b.word_.begin(), b.word_.end());
  }

 private:
  std::vector<std::uint32_t> word_;
};

std::ostream& operator<<(std::ostream& os, const Label& k);

/// Word of k followed by the word of k2.
Label concat(const Label& k, const Label& k2);

/// True iff k2 = k.k~ with k~ nonempty.
bool is_strict_ancestor(const Label& k, const Label& k2) noexcept;

/// k with its last entry removed. Throws InvalidArgument on the root.
Label parent(const Label& k);

struct LabelHash {
  std::size_t operator()(const Label& k) const noexcept;
};

/// A finite sum of Dirac masses at (label, position) with positions in R^d.
/// Atoms are kept sorted by label, so iteration order is deterministic. No
/// label in a configuration is a strict ancestor of another one.
class ParticleConfiguration {
 public:
  struct Atom {
    Label label;
    std::vector<double> position;
  };

  explicit ParticleConfiguration(std::size_t dim = 1);

  /// Validates dimensions, duplicate labels and the antichain property.
  ParticleConfiguration(std::size_t dim, std::vector<Atom> atoms);

  /// Null configuration e_0.
  static ParticleConfiguration empty(std::size_t dim) { return ParticleConfiguration(dim); }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool is_empty() const noexcept { return labels_.empty(); }

  const Label& label(std::size_t i) const { return labels_[i]; }
  std::span<const double> position(std::size_t i) const {
    return {coords_.data() + i * dim_, dim_};
  }
  const std::vector<Label>& labels() const noexcept { return labels_; }

  std::optional<std::size_t> find(const Label& k) const;

  /// Atoms appended in strictly increasing label order; the caller vouches
  /// for the antichain property. Used by path evaluation hot loops.
  void push_back_unchecked(const Label& k, std::span<const double> x);

  /// Throws InvalidArgument if some label is a strict ancestor of another.
  void validate() const;

  friend bool operator==(const ParticleConfiguration&, const ParticleConfiguration&) = default;

 private:
  std::size_t dim_;
  std::vector<Label> labels_;
  std::vector<double> coords_;
};

/// d_E(e1, e2) = sum over shared labels of (|x - y| ^ 1) plus the size of the
/// symmetric difference of the label sets. Euclidean norm on positions.
double config_distance(const ParticleConfiguration& e1, const ParticleConfiguration& e2);

/// Number of atoms, <e, 1>.
std::size_t config_count(const ParticleConfiguration& e) noexcept;

/// CSV rows "label,x_1,...,x_d" with a header row.
void write_configuration_csv(std::ostream& os, const ParticleConfiguration& e);
ParticleConfiguration read_configuration_csv(std::istream& is);

/// Shortest round-trip representation of a double, used by every CSV writer.
std::string format_real(double value);

}  // namespace mkvb
