#include "mmasr/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "mmasr/errors.hpp"

namespace mmasr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr char32_t kBoundaryChar = U'▁';

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Words of a normalized sentence, each prefixed by the boundary marker.
std::vector<std::u32string> marked_words(std::string_view text) {
  std::vector<std::u32string> words;
  std::istringstream in{normalize_text(text)};
  std::string w;
  while (in >> w) words.push_back(kBoundaryChar + utf8_to_u32(w));
  return words;
}

}  // namespace

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
  }
  return out;
}

std::u32string utf8_to_u32(std::string_view s) {
  std::u32string out;
  for (std::size_t i = 0; i < s.size();) {
    auto c = static_cast<unsigned char>(s[i]);
    char32_t cp;
    std::size_t len;
    if (c < 0x80) {
      cp = c;
      len = 1;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1f;
      len = 2;
    } else if ((c >> 4) == 0xe) {
      cp = c & 0x0f;
      len = 3;
    } else if ((c >> 3) == 0x1e) {
      cp = c & 0x07;
      len = 4;
    } else {
      throw DataError("invalid UTF-8 lead byte");
    }
    if (i + len > s.size()) throw DataError("truncated UTF-8 sequence");
    for (std::size_t k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3f);
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string u32_to_utf8(std::u32string_view s) {
  std::string out;
  for (char32_t cp : s) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else {
      out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    }
  }
  return out;
}

// --- Vocabulary ------------------------------------------------------------------

const std::vector<std::string>& Vocabulary::special_names() {
  static const std::vector<std::string> names = {"<pad>", "<unk>", "<sos>", "<eos>"};
  return names;
}

Vocabulary::Vocabulary(std::vector<Piece> pieces) : pieces_(std::move(pieces)) {
  double min_lp = 0.0;
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    auto u = utf8_to_u32(pieces_[i].text);
    if (u.empty()) throw ParameterError("vocabulary: empty piece");
    if (!index_.emplace(u, static_cast<int>(i) + kNumSpecials).second)
      throw ParameterError("vocabulary: duplicate piece '" + pieces_[i].text + "'");
    max_piece_len_ = std::max(max_piece_len_, u.size());
    min_lp = std::min(min_lp, pieces_[i].log_prob);
    pieces_u32_.push_back(std::move(u));
  }
  unk_log_prob_ = min_lp - 10.0;
}

const std::string& Vocabulary::piece(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= size())
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
  if (id < kNumSpecials) return special_names()[static_cast<std::size_t>(id)];
  return pieces_[static_cast<std::size_t>(id - kNumSpecials)].text;
}

double Vocabulary::log_prob(int id) const {
  if (id == kUnk) return unk_log_prob_;
  if (id < kNumSpecials || static_cast<std::size_t>(id) >= size())
    throw IndexError("no log probability for token id " + std::to_string(id));
  return pieces_[static_cast<std::size_t>(id - kNumSpecials)].log_prob;
}

int Vocabulary::find(std::string_view piece) const {
  auto it = index_.find(utf8_to_u32(piece));
  return it == index_.end() ? -1 : it->second;
}

TokenSequence Vocabulary::segment(std::u32string_view text, int excluded_id) const {
  const std::size_t n = text.size();
  std::vector<double> best(n + 1, kNegInf);
  std::vector<int> back_id(n + 1, -1);
  std::vector<std::size_t> back_pos(n + 1, 0);
  best[0] = 0.0;
  std::u32string key;
  for (std::size_t end = 1; end <= n; ++end) {
    const std::size_t max_len = std::min(max_piece_len_, end);
    for (std::size_t len = 1; len <= max_len; ++len) {
      const std::size_t start = end - len;
      if (best[start] == kNegInf) continue;
      key.assign(text.substr(start, len));
      auto it = index_.find(key);
      if (it == index_.end() || it->second == excluded_id) continue;
      double s = best[start] + pieces_[static_cast<std::size_t>(it->second - kNumSpecials)].log_prob;
      if (s > best[end]) {
        best[end] = s;
        back_id[end] = it->second;
        back_pos[end] = start;
      }
    }
    if (best[end] == kNegInf && best[end - 1] != kNegInf) {
      best[end] = best[end - 1] + unk_log_prob_;
      back_id[end] = kUnk;
      back_pos[end] = end - 1;
    }
  }
  TokenSequence ids;
  for (std::size_t pos = n; pos > 0; pos = back_pos[pos]) ids.push_back(back_id[pos]);
  std::reverse(ids.begin(), ids.end());
  return ids;
}

double Vocabulary::score(std::span<const int> ids) const {
  double s = 0.0;
  for (int id : ids) s += log_prob(id);
  return s;
}

TokenSequence Vocabulary::encode(std::string_view text) const {
  std::u32string marked;
  for (const auto& w : marked_words(text)) marked += w;
  return segment(marked);
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string joined;
  for (int id : ids) {
    const std::string& p = piece(id);
    if (id == kPad || id == kSos || id == kEos) continue;
    joined += id == kUnk ? std::string(kUnkSurface) : p;
  }
  std::string out;
  for (std::size_t i = 0; i < joined.size();) {
    if (joined.compare(i, kBoundary.size(), kBoundary) == 0) {
      out.push_back(' ');
      i += kBoundary.size();
    } else {
      out.push_back(joined[i++]);
    }
  }
  if (!out.empty() && out.front() == ' ') out.erase(0, 1);
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "# mmasr unigram vocabulary v1\n[specials]\n";
  for (std::size_t i = 0; i < special_names().size(); ++i) out << special_names()[i] << '\t' << i << '\n';
  out << "[pieces]\n" << std::setprecision(17);
  for (const auto& p : pieces_) out << p.text << '\t' << p.log_prob << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::string section;
  std::vector<Piece> pieces;
  std::size_t specials_seen = 0;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (line == "[specials]" || line == "[pieces]") {
      section = line;
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected piece<TAB>value");
    std::string name = line.substr(0, tab);
    std::string value = line.substr(tab + 1);
    if (section == "[specials]") {
      if (specials_seen >= special_names().size() || name != special_names()[specials_seen] ||
          std::stoul(value) != specials_seen)
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": unexpected special '" + name + "'");
      ++specials_seen;
    } else if (section == "[pieces]") {
      pieces.push_back({name, std::stod(value)});
    } else {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": entry outside a section");
    }
  }
  if (specials_seen != special_names().size()) throw DataError(path.string() + ": incomplete specials header");
  return Vocabulary(std::move(pieces));
}

// --- training ----------------------------------------------------------------------

namespace {

struct Candidate {
  std::u32string text;
  double log_prob = 0.0;
};

Vocabulary to_vocabulary(const std::vector<Candidate>& cands) {
  std::vector<Piece> pieces;
  pieces.reserve(cands.size());
  for (const auto& c : cands) pieces.push_back({u32_to_utf8(c.text), c.log_prob});
  return Vocabulary(std::move(pieces));
}

using WordCounts = std::vector<std::pair<std::u32string, double>>;

// One EM step: expected piece counts via forward-backward over each word's
// segmentation lattice, then renormalization.
void em_step(std::vector<Candidate>& cands, const WordCounts& words) {
  std::unordered_map<std::u32string, std::size_t> index;
  std::size_t max_len = 1;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    index.emplace(cands[i].text, i);
    max_len = std::max(max_len, cands[i].text.size());
  }
  std::vector<double> expected(cands.size(), 0.0);
  std::u32string key;
  for (const auto& [word, freq] : words) {
    const std::size_t n = word.size();
    std::vector<double> alpha(n + 1, kNegInf), beta(n + 1, kNegInf);
    alpha[0] = 0.0;
    for (std::size_t end = 1; end <= n; ++end)
      for (std::size_t len = 1; len <= std::min(max_len, end); ++len) {
        key.assign(word, end - len, len);
        if (auto it = index.find(key); it != index.end())
          alpha[end] = log_add(alpha[end], alpha[end - len] + cands[it->second].log_prob);
      }
    beta[n] = 0.0;
    for (std::size_t start = n; start-- > 0;)
      for (std::size_t len = 1; len <= std::min(max_len, n - start); ++len) {
        key.assign(word, start, len);
        if (auto it = index.find(key); it != index.end())
          beta[start] = log_add(beta[start], beta[start + len] + cands[it->second].log_prob);
      }
    const double z = alpha[n];
    for (std::size_t start = 0; start < n; ++start)
      for (std::size_t len = 1; len <= std::min(max_len, n - start); ++len) {
        key.assign(word, start, len);
        if (auto it = index.find(key); it != index.end())
          expected[it->second] += freq * std::exp(alpha[start] + cands[it->second].log_prob + beta[start + len] - z);
      }
  }
  // Pieces that lose all mass keep a tiny floor so the lattice stays connected.
  double total = 0.0;
  for (double& e : expected) {
    e = std::max(e, 1e-6);
    total += e;
  }
  for (std::size_t i = 0; i < cands.size(); ++i) cands[i].log_prob = std::log(expected[i] / total);
}

// Drops the pieces whose removal costs the least corpus likelihood. Single
// code points are always kept.
std::vector<Candidate> prune(const std::vector<Candidate>& cands, const WordCounts& words, std::size_t target,
                             double prune_fraction) {
  const Vocabulary vocab = to_vocabulary(cands);
  std::vector<double> freq(cands.size(), 0.0);
  for (const auto& [word, f] : words)
    for (int id : vocab.segment(word)) freq[static_cast<std::size_t>(id - Vocabulary::kNumSpecials)] += f;

  double sum = 0.0;
  for (double f : freq) sum += f;
  const double log_sum = std::log(sum);

  std::vector<std::pair<double, std::size_t>> scored;  // (loss, index) for removable pieces
  std::vector<std::size_t> always;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (cands[i].text.size() == 1) {
      always.push_back(i);
      continue;
    }
    if (freq[i] == 0.0) {
      scored.emplace_back(kNegInf, i);
      continue;
    }
    const int id = static_cast<int>(i) + Vocabulary::kNumSpecials;
    TokenSequence alt = vocab.segment(cands[i].text, id);
    const double lp_piece = std::log(freq[i]) - log_sum;
    const double new_log_sum = std::log(sum + freq[i] * (static_cast<double>(alt.size()) - 1.0));
    double lp_alt = 0.0;
    for (int a : alt) lp_alt += std::log(freq[static_cast<std::size_t>(a - Vocabulary::kNumSpecials)] + freq[i]) - new_log_sum;
    scored.emplace_back(freq[i] * (lp_piece - lp_alt), i);
  }

  std::size_t keep = std::max(target, static_cast<std::size_t>(std::ceil(cands.size() * (1.0 - prune_fraction))));
  keep = std::max(target, std::min(keep, cands.size() - 1));
  keep = std::max(keep, always.size());
  std::stable_sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return cands[a.second].text < cands[b.second].text;
  });
  std::vector<bool> kept(cands.size(), false);
  for (std::size_t i : always) kept[i] = true;
  for (std::size_t k = 0; k < scored.size() && k + always.size() < keep; ++k) kept[scored[k].second] = true;
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (kept[i]) out.push_back(cands[i]);
  return out;
}

}  // namespace

Vocabulary train_unigram(std::span<const std::string> corpus, const UnigramTrainerConfig& cfg) {
  if (corpus.empty()) throw ParameterError("train_unigram: empty corpus");
  if (cfg.seed_max_len == 0 || cfg.em_iters < 1 || !(cfg.prune_fraction > 0.0 && cfg.prune_fraction < 1.0))
    throw ParameterError("train_unigram: invalid trainer configuration");

  std::map<std::u32string, double> word_freq;
  for (const auto& sentence : corpus)
    for (auto& w : marked_words(sentence)) word_freq[w] += 1.0;
  if (word_freq.empty()) throw ParameterError("train_unigram: corpus has no words");
  WordCounts words(word_freq.begin(), word_freq.end());

  std::map<std::u32string, double> chars, substrings;
  for (const auto& [w, f] : words) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      chars[w.substr(i, 1)] += f;
      for (std::size_t len = 2; len <= cfg.seed_max_len && i + len <= w.size(); ++len) substrings[w.substr(i, len)] += f;
    }
  }
  if (cfg.target_size < chars.size() + Vocabulary::kNumSpecials)
    throw ParameterError("train_unigram: target size " + std::to_string(cfg.target_size) +
                         " is below alphabet size " + std::to_string(chars.size()) + " plus " +
                         std::to_string(Vocabulary::kNumSpecials) + " specials");
  const std::size_t target = cfg.target_size - Vocabulary::kNumSpecials;

  // Seed vocabulary: every character plus the most frequent substrings.
  std::vector<std::pair<std::u32string, double>> ranked(substrings.begin(), substrings.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t cap = 20 * cfg.target_size;
  std::vector<Candidate> cands;
  double total = 0.0;
  for (const auto& [c, f] : chars) {
    cands.push_back({c, f});
    total += f;
  }
  for (const auto& [s, f] : ranked) {
    if (cands.size() >= cap) break;
    cands.push_back({s, f});
    total += f;
  }
  for (auto& c : cands) c.log_prob = std::log(c.log_prob / total);

  while (true) {
    for (int it = 0; it < cfg.em_iters; ++it) em_step(cands, words);
    if (cands.size() <= target) break;
    std::size_t before = cands.size();
    cands = prune(cands, words, target, cfg.prune_fraction);
    if (cands.size() == before) break;
  }
  return to_vocabulary(cands);
}

double corpus_log_likelihood(const Vocabulary& vocab, std::span<const std::string> corpus) {
  double ll = 0.0;
  for (const auto& s : corpus)
    for (const auto& w : marked_words(s)) ll += vocab.score(vocab.segment(w));
  return ll;
}

}  // namespace mmasr
