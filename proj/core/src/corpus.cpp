// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include "forgetrace/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>

#include "forgetrace/error.hpp"
#include "forgetrace/random.hpp"
#include "json.hpp"

namespace forgetrace {

using json = nlohmann::json;

std::string_view to_string(EntityType type) {
  switch (type) {
    case EntityType::MISC: return "MISC";
    case EntityType::PER: return "PER";
    case EntityType::LOC: return "LOC";
    case EntityType::ORG: return "ORG";
  }
  return "MISC";
}

std::string_view to_string(Source source) { return source == Source::A ? "A" : "B"; }

EntityType parse_entity_type(std::string_view text) {
  for (EntityType t : kEntityTypes) {
    if (to_string(t) == text) return t;
  }
  throw FormatError("unknown entity type '" + std::string(text) + "'");
}

Source parse_source(std::string_view text) {
  if (text == "A") return Source::A;
  if (text == "B") return Source::B;
  throw FormatError("unknown source '" + std::string(text) + "'");
}

std::size_t Batch::supervised_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

void Batch::validate(std::size_t vocab_size) const {
  if (tokens.size() != rows * cols || mask.size() != rows * cols) {
    throw ConfigError("batch shape mismatch");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < cols; ++t) {
      const TokenId id = token(r, t);
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
        throw ConfigError("batch token id out of range");
      }
      if (supervised(r, t) && t + 1 >= cols) {
        throw ConfigError("supervised position without successor");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab(std::vector<std::string> words) {
  tokens_.reserve(words.size() + 3);
  tokens_.emplace_back(kUnkSurface);
  tokens_.emplace_back(kBosSurface);
  tokens_.emplace_back(kPadSurface);
  for (auto& w : words) tokens_.push_back(std::move(w));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) throw FormatError("duplicate vocab token '" + tokens_[i] + "'");
  }
}

TokenId Vocab::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view word) const { return index_.contains(std::string(word)); }

const std::string& Vocab::surface(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ConfigError("token id out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < 3 || lines[0] != kUnkSurface || lines[1] != kBosSurface ||
      lines[2] != kPadSurface) {
    throw FormatError("vocab file must start with <unk>, <bos>, <pad>");
  }
  lines.erase(lines.begin(), lines.begin() + 3);
  return Vocab(std::move(lines));
}

// ---------------------------------------------------------------------------
// Tokenization

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Vocab build_vocab(std::span<const Document> documents, std::size_t max_size) {
  if (max_size < 4) throw ConfigError("max_size must be ≥ 4");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& d : documents) {
    for (auto& w : normalize_words(d.text)) ++counts[w];
  }
  for (auto s : {Vocab::kUnkSurface, Vocab::kBosSurface, Vocab::kPadSurface}) {
    counts.erase(std::string(s));
  }
  if (counts.empty()) throw ConfigError("empty corpus");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  const std::size_t keep = std::min(ranked.size(), max_size - 3);
  std::vector<std::string> words;
  words.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) words.push_back(std::move(ranked[i].first));
  return Vocab(std::move(words));
}

TokenSeq tokenize(std::string_view text, const Vocab& vocab) {
  TokenSeq ids;
  for (const auto& w : normalize_words(text)) {
    TokenId id = vocab.id(w);
    // Specials typed literally in text are not specials.
    if (id == Vocab::kBos || id == Vocab::kPad) id = Vocab::kUnk;
    ids.push_back(id);
  }
  return ids;
}

std::string detokenize(std::span<const TokenId> ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += vocab.surface(ids[i]);
  }
  return out;
}

void tokenize_documents(std::span<Document> docs, const Vocab& vocab) {
  for (auto& d : docs) d.tokens = tokenize(d.text, vocab);
}

// ---------------------------------------------------------------------------
// Composition and evaluation sampling

std::string_view to_string(ComposeMode mode) {
  return mode == ComposeMode::sequential_AB ? "sequential_AB" : "mixed_shuffled";
}

ComposeMode parse_compose_mode(std::string_view text) {
  if (text == "sequential_AB") return ComposeMode::sequential_AB;
  if (text == "mixed_shuffled") return ComposeMode::mixed_shuffled;
  throw ConfigError("unknown corpus mode '" + std::string(text) + "'");
}

CorpusStream::CorpusStream(std::vector<Document> docs, std::span<const std::size_t> part_sizes,
                           std::size_t batch_size, std::size_t seq_len,
                           std::uint64_t shuffle_seed)
    : docs_(std::move(docs)),
      batch_size_(batch_size),
      seq_len_(seq_len),
      shuffle_seed_(shuffle_seed) {
  if (batch_size_ == 0) throw ConfigError("batch_size must be ≥ 1");
  if (seq_len_ < 2) throw ConfigError("seq_len must be ≥ 2");
  offsets_.push_back(0);
  std::size_t pos = 0;
  boundary_batch_ = 0;
  for (std::size_t p = 0; p < part_sizes.size(); ++p) {
    const std::size_t end = pos + part_sizes[p];
    for (std::size_t i = pos; i < end; i += batch_size_) {
      offsets_.push_back(std::min(end, i + batch_size_));
    }
    pos = end;
    if (p == 0) boundary_batch_ = offsets_.size() - 1;
  }
  if (pos != docs_.size()) throw ConfigError("stream parts do not cover the documents");
  if (part_sizes.size() <= 1) boundary_batch_ = num_batches();
}

std::span<const Document> CorpusStream::batch(std::size_t index) const {
  if (index >= num_batches()) throw ConfigError("batch index out of range");
  return std::span<const Document>(docs_).subspan(offsets_[index],
                                                  offsets_[index + 1] - offsets_[index]);
}

std::size_t CorpusStream::step_of(std::size_t position) const {
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), position);
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

CorpusStream compose_corpus(std::span<const Document> a, std::span<const Document> b,
                            ComposeMode mode, std::size_t batch_size, std::size_t seq_len,
                            std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be ≥ 1");
  if (seq_len < 2) throw ConfigError("seq_len must be ≥ 2");
  std::vector<Document> docs;
  docs.reserve(a.size() + b.size());
  docs.insert(docs.end(), a.begin(), a.end());
  docs.insert(docs.end(), b.begin(), b.end());

  if (mode == ComposeMode::mixed_shuffled) {
    Rng rng(seed);
    rng.shuffle(std::span<Document>(docs));
    const std::size_t parts[] = {docs.size()};
    return CorpusStream(std::move(docs), parts, batch_size, seq_len, seed);
  }
  const std::size_t parts[] = {a.size(), b.size()};
  return CorpusStream(std::move(docs), parts, batch_size, seq_len, seed);
}

std::vector<Document> segment_eval_set(const CorpusStream& stream, Fraction fraction,
                                       std::size_t segments, std::uint64_t seed) {
  if (fraction.num <= 0 || fraction.den <= 0) throw ConfigError("fraction must be > 0");
  if (fraction.num > fraction.den) throw ConfigError("fraction must be ≤ 1");
  if (segments == 0) throw ConfigError("segments must be ≥ 1");

  const std::size_t nb = stream.num_batches();
  const auto docs = stream.documents();
  Rng rng(seed);
  std::vector<Document> out;
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t b0 = s * nb / segments;
    const std::size_t b1 = (s + 1) * nb / segments;
    const auto [d0, d1] = stream.doc_range(b0, b1);
    const std::size_t n = d1 - d0;
    const auto take = static_cast<std::size_t>(
        (static_cast<std::int64_t>(n) * fraction.num) / fraction.den);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), d0);
    // Partial Fisher-Yates: the first `take` slots are a uniform sample.
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) out.push_back(docs[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Packing

PackedBatch pack_documents(std::span<const TokenSeq* const> docs, std::size_t seq_len) {
  if (seq_len < 2) throw ConfigError("seq_len must be ≥ 2");
  std::vector<TokenId> stream;
  std::vector<std::int32_t> stream_owner;  // owner of each stream token as a target
  for (std::size_t d = 0; d < docs.size(); ++d) {
    stream.push_back(Vocab::kBos);
    stream_owner.push_back(-1);
    for (TokenId t : *docs[d]) {
      stream.push_back(t);
      stream_owner.push_back(static_cast<std::int32_t>(d));
    }
  }
  PackedBatch out;
  out.real_tokens = stream.size();
  Batch& batch = out.batch;
  batch.cols = seq_len;
  if (stream.size() < 2) return out;

  const std::size_t stride = seq_len - 1;
  const std::size_t transitions = stream.size() - 1;
  batch.rows = (transitions + stride - 1) / stride;
  batch.tokens.assign(batch.rows * seq_len, Vocab::kPad);
  batch.mask.assign(batch.rows * seq_len, 0);
  out.owner.assign(batch.rows * seq_len, -1);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const std::size_t start = r * stride;
    for (std::size_t t = 0; t < seq_len && start + t < stream.size(); ++t) {
      batch.tokens[r * seq_len + t] = stream[start + t];
      if (t + 1 < seq_len && start + t + 1 < stream.size()) {
        batch.mask[r * seq_len + t] = 1;
        out.owner[r * seq_len + t] = stream_owner[start + t + 1];
      }
    }
  }
  return out;
}

PackedBatch pack_documents(std::span<const Document> docs, std::size_t seq_len) {
  std::vector<const TokenSeq*> ptrs;
  ptrs.reserve(docs.size());
  for (const auto& d : docs) ptrs.push_back(&d.tokens);
  return pack_documents(ptrs, seq_len);
}

Batch rows_batch(std::span<const TokenSeq> sequences) {
  Batch batch;
  batch.rows = sequences.size();
  for (const auto& s : sequences) batch.cols = std::max(batch.cols, s.size());
  batch.tokens.assign(batch.rows * batch.cols, Vocab::kPad);
  batch.mask.assign(batch.rows * batch.cols, 0);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const auto& s = sequences[r];
    for (std::size_t t = 0; t < s.size(); ++t) {
      batch.tokens[r * batch.cols + t] = s[t];
      if (t + 1 < s.size()) batch.mask[r * batch.cols + t] = 1;
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// JSONL

namespace {

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      fn(j);
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<Document> read_documents_jsonl(const std::filesystem::path& path,
                                           Source default_source) {
  std::vector<Document> docs;
  for_each_json_line(path, [&](const json& j) {
    Document d;
    d.doc_id = j.at("id").get<std::int64_t>();
    d.text = j.at("text").get<std::string>();
    d.source = j.contains("source") ? parse_source(j["source"].get<std::string>())
                                    : default_source;
    if (j.contains("tokens")) d.tokens = j["tokens"].get<TokenSeq>();
    if (j.contains("entities")) {
      for (const auto& e : j["entities"]) {
        EntitySpan s;
        s.entity_id = e.at("entity_id").get<std::int64_t>();
        s.token_start = e.at("start").get<std::size_t>();
        s.token_end = e.at("end").get<std::size_t>();
        s.type = parse_entity_type(e.at("type").get<std::string>());
        d.entities.push_back(s);
      }
    }
    docs.push_back(std::move(d));
  });
  return docs;
}

void write_documents_jsonl(const std::filesystem::path& path, std::span<const Document> docs,
                           bool with_tokens) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& d : docs) {
    json j;
    j["id"] = d.doc_id;
    j["source"] = std::string(to_string(d.source));
    j["text"] = d.text;
    if (with_tokens) {
      j["tokens"] = d.tokens;
      json spans = json::array();
      for (const auto& s : d.entities) {
        spans.push_back({{"entity_id", s.entity_id},
                         {"start", s.token_start},
                         {"end", s.token_end},
                         {"type", std::string(to_string(s.type))}});
      }
      j["entities"] = std::move(spans);
    }
    out << j.dump() << '\n';
  }
}

std::vector<EntityRecord> read_entities_jsonl(const std::filesystem::path& path) {
  std::vector<EntityRecord> records;
  for_each_json_line(path, [&](const json& j) {
    EntityRecord r;
    r.entity_id = j.at("entity_id").get<std::int64_t>();
    r.surface = j.at("surface").get<std::string>();
    r.type = parse_entity_type(j.at("type").get<std::string>());
    records.push_back(std::move(r));
  });
  return records;
}

void write_entities_jsonl(const std::filesystem::path& path,
                          std::span<const EntityRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) {
    json j{{"entity_id", r.entity_id},
           {"surface", r.surface},
           {"type", std::string(to_string(r.type))}};
    out << j.dump() << '\n';
  }
}

}  // namespace forgetrace
