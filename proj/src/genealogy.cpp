#include "mkvb/genealogy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "mkvb/error.hpp"

namespace mkvb {

namespace {

void check_word(const std::vector<std::uint32_t>& word) {
  for (auto v : word) {
    if (v == 0) throw InvalidArgument("label entries must be >= 1");
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

Label::Label(std::initializer_list<std::uint32_t> word) : word_(word) { check_word(word_); }

Label::Label(std::vector<std::uint32_t> word) : word_(std::move(word)) { check_word(word_); }

Label Label::parse(std::string_view text) {
  std::vector<std::uint32_t> word;
  if (text.empty()) return Label{};
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto dot = text.find('.', pos);
    auto piece = text.substr(pos, dot == std::string_view::npos ? text.size() - pos : dot - pos);
    std::uint32_t value = 0;
    auto [end, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), value);
    if (ec != std::errc{} || end != piece.data() + piece.size() || value == 0) {
      throw InvalidArgument("malformed label '" + std::string(text) + "'");
    }
    word.push_back(value);
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  return Label(std::move(word));
}

std::uint32_t Label::back() const {
  if (word_.empty()) throw InvalidArgument("root label has no last entry");
  return word_.back();
}

Label Label::child(std::uint32_t i) const {
  if (i == 0) throw InvalidArgument("offspring index must be >= 1");
  Label out = *this;
  out.word_.push_back(i);
  return out;
}

std::string Label::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < word_.size(); ++i) {
    if (i) out.push_back('.');
    out += std::to_string(word_[i]);
  }
  return out;
}

std::ostream& operator<<(std::ostream& os, const Label& k) {
  return os << (k.is_root() ? std::string("<root>") : k.to_string());
}

Label concat(const Label& k, const Label& k2) {
  std::vector<std::uint32_t> word(k.word().begin(), k.word().end());
  word.insert(word.end(), k2.word().begin(), k2.word().end());
  return Label(std::move(word));
}

bool is_strict_ancestor(const Label& k, const Label& k2) noexcept {
  auto a = k.word();
  auto b = k2.word();
  return a.size() < b.size() && std::equal(a.begin(), a.end(), b.begin());
}

Label parent(const Label& k) {
  if (k.is_root()) throw InvalidArgument("root label has no parent");
  auto w = k.word();
  return Label(std::vector<std::uint32_t>(w.begin(), w.end() - 1));
}

std::size_t LabelHash::operator()(const Label& k) const noexcept {
  // FNV-1a over the entries.
  std::uint64_t h = 1469598103934665603ULL;
  for (auto v : k.word()) {
    h ^= v;
    h *= 1099511628211ULL;
  }
  h ^= k.depth();
  return static_cast<std::size_t>(h);
}

ParticleConfiguration::ParticleConfiguration(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw InvalidArgument("dimension must be >= 1");
}

ParticleConfiguration::ParticleConfiguration(std::size_t dim, std::vector<Atom> atoms)
    : ParticleConfiguration(dim) {
  std::sort(atoms.begin(), atoms.end(),
            [](const Atom& a, const Atom& b) { return a.label < b.label; });
  labels_.reserve(atoms.size());
  coords_.reserve(atoms.size() * dim);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (atoms[i].position.size() != dim) {
      throw InvalidArgument("atom " + atoms[i].label.to_string() + " has dimension " +
                            std::to_string(atoms[i].position.size()) + ", expected " +
                            std::to_string(dim));
    }
    if (i > 0 && atoms[i].label == atoms[i - 1].label) {
      throw InvalidArgument("duplicate label " + atoms[i].label.to_string());
    }
    labels_.push_back(std::move(atoms[i].label));
    coords_.insert(coords_.end(), atoms[i].position.begin(), atoms[i].position.end());
  }
  validate();
}

std::optional<std::size_t> ParticleConfiguration::find(const Label& k) const {
  auto it = std::lower_bound(labels_.begin(), labels_.end(), k);
  if (it == labels_.end() || *it != k) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

void ParticleConfiguration::push_back_unchecked(const Label& k, std::span<const double> x) {
  labels_.push_back(k);
  coords_.insert(coords_.end(), x.begin(), x.end());
}

void ParticleConfiguration::validate() const {
  // In lexicographic order the descendants of k form a contiguous block
  // right after k, so checking neighbours is enough.
  for (std::size_t i = 1; i < labels_.size(); ++i) {
    if (!(labels_[i - 1] < labels_[i])) {
      throw InvalidArgument("configuration labels are not strictly increasing");
    }
    if (is_strict_ancestor(labels_[i - 1], labels_[i])) {
      throw InvalidArgument("antichain violated: " + labels_[i - 1].to_string() +
                            " is an ancestor of " + labels_[i].to_string());
    }
  }
  if (coords_.size() != labels_.size() * dim_) {
    throw InvalidArgument("configuration coordinate storage is inconsistent");
  }
}

double config_distance(const ParticleConfiguration& e1, const ParticleConfiguration& e2) {
  if (e1.dim() != e2.dim()) {
    throw InvalidArgument("dimension mismatch: " + std::to_string(e1.dim()) + " vs " +
                          std::to_string(e2.dim()));
  }
  const std::size_t dim = e1.dim();
  double shared = 0.0;
  std::size_t unmatched = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < e1.size() && j < e2.size()) {
    auto order = e1.label(i) <=> e2.label(j);
    if (order < 0) {
      ++unmatched;
      ++i;
    } else if (order > 0) {
      ++unmatched;
      ++j;
    } else {
      auto x = e1.position(i);
      auto y = e2.position(j);
      double sq = 0.0;
      for (std::size_t c = 0; c < dim; ++c) sq += (x[c] - y[c]) * (x[c] - y[c]);
      shared += std::min(std::sqrt(sq), 1.0);
      ++i;
      ++j;
    }
  }
  unmatched += (e1.size() - i) + (e2.size() - j);
  return shared + static_cast<double>(unmatched);
}

std::size_t config_count(const ParticleConfiguration& e) noexcept { return e.size(); }

std::string format_real(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

void write_configuration_csv(std::ostream& os, const ParticleConfiguration& e) {
  os << "label";
  for (std::size_t c = 0; c < e.dim(); ++c) os << ",x_" << (c + 1);
  os << '\n';
  for (std::size_t i = 0; i < e.size(); ++i) {
    os << e.label(i).to_string();
    for (double v : e.position(i)) os << ',' << format_real(v);
    os << '\n';
  }
}

ParticleConfiguration read_configuration_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("configuration CSV is empty");
  auto header = split(line, ',');
  if (header.empty() || header[0] != "label" || header.size() < 2) {
    throw InvalidArgument("configuration CSV header must be label,x_1..x_d");
  }
  const std::size_t dim = header.size() - 1;
  std::vector<ParticleConfiguration::Atom> atoms;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != dim + 1) throw InvalidArgument("configuration CSV row has wrong arity");
    ParticleConfiguration::Atom atom{Label::parse(cells[0]), {}};
    for (std::size_t c = 1; c < cells.size(); ++c) atom.position.push_back(std::stod(cells[c]));
    atoms.push_back(std::move(atom));
  }
  return ParticleConfiguration(dim, std::move(atoms));
}

}  // namespace mkvb
