#include "mplab/arith.hpp"

#include <charconv>
#include <vector>

namespace mplab::arith {

void PrecisionFormat::validate() const {
  if (!valid())
    throw FormatError("invalid format t=" + std::to_string(mantissa_bits) +
                      " r=" + std::to_string(exponent_bits) + " (need 1<=t<=52, 2<=r<=11)");
}

double round_vprec(double x, PrecisionFormat fmt) {
  fmt.validate();
  return detail::round_vprec_unchecked(x, fmt);
}

double inexact(double x, int t, double xi) {
  if (t < 1 || t > 53) throw FormatError("virtual precision out of range: " + std::to_string(t));
  return detail::inexact_unchecked(x, t, xi);
}

std::uint64_t detail::hash_label(std::string_view s) {
  // FNV-1a, then finalised.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return mix64(h);
}

std::string_view to_string(Op op) {
  switch (op) {
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::sqrt: return "sqrt";
  }
  return "?";
}

void Backend::validate() const {
  switch (kind) {
    case Kind::ieee: return;
    case Kind::vprec: format.validate(); return;
    case Kind::mca_rr:
    case Kind::mca_full:
      if (virtual_precision < 1 || virtual_precision > 53)
        throw FormatError("virtual precision out of range: " + std::to_string(virtual_precision));
      return;
  }
}

std::string Backend::to_string() const {
  switch (kind) {
    case Kind::ieee: return "ieee";
    case Kind::vprec:
      return "vprec:" + std::to_string(format.mantissa_bits) + ":" + std::to_string(format.exponent_bits);
    case Kind::mca_rr: return "mca_rr:" + std::to_string(virtual_precision);
    case Kind::mca_full: return "mca_full:" + std::to_string(virtual_precision);
  }
  return "?";
}

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto next = s.find(sep, pos);
    out.push_back(s.substr(pos, next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

int parse_int(std::string_view s, std::string_view whole) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw FormatError("bad backend spec '" + std::string(whole) + "'");
  return v;
}

}  // namespace

Backend Backend::parse(std::string_view spec) {
  const auto parts = split(spec, ':');
  const auto& name = parts.front();
  Backend b;
  if (name == "ieee" && parts.size() == 1) {
    b = ieee();
  } else if (name == "vprec" && (parts.size() == 2 || parts.size() == 3)) {
    const int t = parse_int(parts[1], spec);
    const int r = parts.size() == 3 ? parse_int(parts[2], spec) : 11;
    b = vprec({t, r});
  } else if ((name == "mca_rr" || name == "rr") && parts.size() == 2) {
    b = mca_rr(parse_int(parts[1], spec));
  } else if ((name == "mca_full" || name == "mca") && parts.size() == 2) {
    b = mca_full(parse_int(parts[1], spec));
  } else {
    throw FormatError("bad backend spec '" + std::string(spec) + "'");
  }
  b.validate();
  return b;
}

ArithmeticContext::ArithmeticContext(Backend backend, std::uint64_t seed, std::uint64_t sample_index,
                                     std::string section)
    : backend_(backend), seed_(seed), sample_index_(sample_index), section_(std::move(section)) {
  backend_.validate();
  key_ = detail::mix64(detail::mix64(seed_ ^ 0x6a09e667f3bcc909ull) ^
                       detail::mix64(sample_index_ + 0x9e3779b97f4a7c15ull) ^ detail::hash_label(section_));
}

double ArithmeticContext::noise(Slot slot, Op op, double a, double b) const {
  using detail::mix64;
  std::uint64_t h = mix64(key_ ^ (epoch_ * 0x9e3779b97f4a7c15ull));
  h = mix64(h ^ std::bit_cast<std::uint64_t>(a));
  h = mix64(h ^ std::bit_cast<std::uint64_t>(b) ^
            ((static_cast<std::uint64_t>(op) << 8 | static_cast<std::uint64_t>(slot)) << 52));
  // Midpoint of one of 2^53 equal cells of [0,1): never 0 or 1, so the
  // shifted value lies strictly inside (-1/2, 1/2).
  const double u = (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
  return u - 0.5;
}

std::uint64_t ArithmeticContext::flops() const {
  std::uint64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

SectionMap& SectionMap::set(const std::string& section, Backend b) {
  b.validate();
  entries_[section] = b;
  return *this;
}

Backend SectionMap::at(const std::string& section) const {
  auto it = entries_.find(section);
  return it == entries_.end() ? fallback_ : it->second;
}

SectionMap SectionMap::scoped(Backend b, std::initializer_list<std::string_view> sections) {
  SectionMap m;
  for (auto s : sections) m.set(std::string(s), b);
  return m;
}

ContextSet::ContextSet(SectionMap map, std::uint64_t seed, std::uint64_t sample_index, bool perturb_sqrt)
    : map_(std::move(map)), seed_(seed), sample_index_(sample_index), perturb_sqrt_(perturb_sqrt) {}

ArithmeticContext& ContextSet::operator[](const std::string& section) {
  auto it = contexts_.find(section);
  if (it == contexts_.end()) {
    it = contexts_.emplace(section, ArithmeticContext(map_.at(section), seed_, sample_index_, section)).first;
    it->second.set_perturb_sqrt(perturb_sqrt_);
  }
  return it->second;
}

}  // namespace mplab::arith
