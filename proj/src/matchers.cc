#include "kaqa/matchers.h"

#include <cmath>

#include "kaqa/log.h"
#include "kaqa/nn.h"

namespace kaqa {

using ad::Tensor;
using nlohmann::json;

Architecture ParseArchitecture(std::string_view name) {
  if (name == "arc1") return Architecture::kArc1;
  if (name == "matchpyramid") return Architecture::kMatchPyramid;
  if (name == "iwan") return Architecture::kIwan;
  throw UsageError("unknown architecture '" + std::string(name) +
                   "' (expected arc1, matchpyramid or iwan)");
}

std::string_view ArchitectureName(Architecture a) {
  switch (a) {
    case Architecture::kArc1:
      return "arc1";
    case Architecture::kMatchPyramid:
      return "matchpyramid";
    case Architecture::kIwan:
      return "iwan";
  }
  return "?";
}

std::string_view ChannelName(Channel c) {
  switch (c) {
    case Channel::kToken:
      return "token";
    case Channel::kEntity:
      return "entity";
    case Channel::kTriple:
      return "triple";
  }
  return "?";
}

Channel ParseChannel(std::string_view name) {
  for (Channel c : kAllChannels) {
    if (ChannelName(c) == name) return c;
  }
  throw UsageError("unknown channel '" + std::string(name) +
                   "' (expected token, entity or triple)");
}

bool ChannelSet::Has(Channel c) const {
  switch (c) {
    case Channel::kToken:
      return token;
    case Channel::kEntity:
      return entity;
    case Channel::kTriple:
      return triple;
  }
  return false;
}

std::vector<std::string> ChannelSet::Names() const {
  std::vector<std::string> out;
  for (Channel c : kAllChannels) {
    if (Has(c)) out.emplace_back(ChannelName(c));
  }
  return out;
}

ChannelSet ChannelSet::FromNames(const std::vector<std::string>& names) {
  ChannelSet s{false, false, false};
  for (const std::string& n : names) {
    switch (ParseChannel(n)) {
      case Channel::kToken:
        s.token = true;
        break;
      case Channel::kEntity:
        s.entity = true;
        break;
      case Channel::kTriple:
        s.triple = true;
        break;
    }
  }
  if (!s.token && !s.entity && !s.triple) {
    throw UsageError("at least one channel must be enabled");
  }
  return s;
}

json MatcherDims::ToJson() const {
  return {{"embed", embed},
          {"filters", filters},
          {"lstm_hidden", lstm_hidden},
          {"iwan_output", iwan_output},
          {"fusion_hidden", fusion_hidden},
          {"max_tokens", max_tokens},
          {"max_entities", max_entities},
          {"max_triples", max_triples}};
}

MatcherDims DefaultDims(Architecture a) {
  MatcherDims d;
  if (a == Architecture::kIwan) d.embed = 256;
  return d;
}

MatcherDims DimsFromJson(const json& j, MatcherDims base,
                         std::vector<std::string>* problems) {
  if (!j.is_object()) {
    problems->push_back("dims must be an object");
    return base;
  }
  const std::pair<const char*, std::size_t*> fields[] = {
      {"embed", &base.embed},
      {"filters", &base.filters},
      {"lstm_hidden", &base.lstm_hidden},
      {"iwan_output", &base.iwan_output},
      {"fusion_hidden", &base.fusion_hidden},
      {"max_tokens", &base.max_tokens},
      {"max_entities", &base.max_entities},
      {"max_triples", &base.max_triples}};
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const auto& [name, field] : fields) {
      if (key != name) continue;
      known = true;
      if (!value.is_number_unsigned() || value.get<std::uint64_t>() == 0) {
        problems->push_back("dims." + key + " must be a positive integer");
      } else {
        *field = value.get<std::size_t>();
      }
    }
    if (!known) problems->push_back("dims: unknown field '" + key + "'");
  }
  return base;
}

Vocab::Vocab() {
  Add("<pad>");
  Add("<null>");
  Add("<unk>");
}

void Vocab::Add(const std::string& token) {
  if (index_.contains(token)) return;
  index_.emplace(token, static_cast<std::int64_t>(tokens_.size()));
  tokens_.push_back(token);
}

Vocab Vocab::Build(const std::vector<std::string>& texts, TokenizerMode mode) {
  Vocab v;
  for (const std::string& t : texts) {
    for (const TokenSpan& tok : Tokenize(t, mode)) v.Add(CaseFold(tok.text));
  }
  return v;
}

std::int64_t Vocab::Id(std::string_view token) const {
  auto it = index_.find(CaseFold(token));
  return it == index_.end() ? kUnknown : it->second;
}

json Vocab::ToJson() const { return tokens_; }

Vocab Vocab::FromJson(const json& j) {
  Vocab v;
  const auto tokens = j.get<std::vector<std::string>>();
  if (tokens.size() < 3 || tokens[0] != "<pad>" || tokens[1] != "<null>" ||
      tokens[2] != "<unk>") {
    throw DataError("token vocabulary lacks the reserved entries");
  }
  for (const std::string& t : tokens) v.Add(t);
  if (v.size() != tokens.size()) throw DataError("token vocabulary has duplicates");
  return v;
}

EntityVocab::EntityVocab(const KnowledgeGraph& kg) {
  for (const auto& [id, e] : kg.entities()) {
    if (kg.Normalize(id) != id) continue;
    index_.emplace(id, kFirstEntity + static_cast<std::int64_t>(reps_.size()));
    reps_.push_back(id);
  }
}

std::int64_t EntityVocab::Id(EntityId normalized) const {
  auto it = index_.find(normalized);
  return it == index_.end() ? kNull : it->second;
}

std::int64_t EntityVocab::RelationId(RelationKind r) {
  return kFirstRelation + static_cast<std::int64_t>(r);
}

json EntityVocab::ToJson() const { return reps_; }

EntityVocab EntityVocab::FromJson(const json& j) {
  EntityVocab v;
  for (EntityId id : j.get<std::vector<EntityId>>()) {
    v.index_.emplace(id, kFirstEntity + static_cast<std::int64_t>(v.reps_.size()));
    v.reps_.push_back(id);
  }
  return v;
}

namespace {

template <typename T>
std::size_t Fill(std::vector<T>& out, const std::vector<T>& items, std::size_t max_len,
                 T pad, T null, const char* channel, std::string_view text) {
  std::size_t n = items.size();
  if (n > max_len) {
    LogWarning(std::string(channel) + " channel truncated from " + std::to_string(n) +
               " to " + std::to_string(max_len) + ": " + std::string(text));
    n = max_len;
  }
  out.assign(max_len, pad);
  if (n == 0) {
    out[0] = null;
  } else {
    std::copy_n(items.begin(), n, out.begin());
  }
  return n;
}

}  // namespace

ChannelizedInput EncodeChannels(std::string_view text, const AnchorSet& anchors,
                                const Vocab& vocab, const EntityVocab& entities,
                                const MatcherDims& dims, TokenizerMode mode) {
  ChannelizedInput x;
  std::vector<std::int64_t> tokens;
  for (const TokenSpan& t : Tokenize(text, mode)) tokens.push_back(vocab.Id(t.text));
  x.token_length = Fill(x.tokens, tokens, dims.max_tokens, Vocab::kPad, Vocab::kNull,
                        "token", text);

  std::vector<std::int64_t> ents;
  for (const EntityMention& m : anchors.entities) ents.push_back(entities.Id(m.entity));
  x.entity_length = Fill(x.entities, ents, dims.max_entities, EntityVocab::kPad,
                         EntityVocab::kNull, "entity", text);

  using Triplet = std::array<std::int64_t, 3>;
  std::vector<Triplet> triples;
  for (const TripleCandidate& c : anchors.triples) {
    if (c.relation != RelationKind::kHasOperation) continue;
    triples.push_back({entities.Id(c.head.entity), EntityVocab::RelationId(c.relation),
                       entities.Id(c.tail.entity)});
  }
  x.triple_length = Fill(x.triples, triples, dims.max_triples,
                         Triplet{EntityVocab::kPad, EntityVocab::kPad, EntityVocab::kPad},
                         Triplet{EntityVocab::kNull, EntityVocab::kNull, EntityVocab::kNull},
                         "triple", text);
  return x;
}

Tensor SimilarityFeatures::Fused() const { return ad::Concat({token, entity, triple}, 0); }

json MatcherConfig::ToJson() const {
  return {{"architecture", ArchitectureName(architecture)},
          {"channels", channels.Names()},
          {"dims", dims.ToJson()},
          {"token_vocab", token_vocab},
          {"entity_vocab", entity_vocab}};
}

MatcherConfig MatcherConfig::FromJson(const json& j) {
  MatcherConfig c;
  try {
    c.architecture = ParseArchitecture(j.at("architecture").get<std::string>());
    c.channels = ChannelSet::FromNames(j.at("channels").get<std::vector<std::string>>());
    std::vector<std::string> problems;
    c.dims = DimsFromJson(j.at("dims"), DefaultDims(c.architecture), &problems);
    if (!problems.empty()) throw DataError(problems.front());
    c.token_vocab = j.at("token_vocab").get<std::size_t>();
    c.entity_vocab = j.at("entity_vocab").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(std::string("bad matcher config: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("bad matcher config: ") + e.what());
  }
  return c;
}

namespace {

std::string Prefix(Channel c) { return std::string(ChannelName(c)); }

}  // namespace

Matcher::Matcher(const MatcherConfig& config, std::uint64_t seed) : config_(config) {
  Rng rng(seed);
  const MatcherDims& d = config.dims;
  if (config.channels.token) {
    params_.CreateUniform("token.embed", {config.token_vocab, d.embed}, d.embed, rng);
  }
  if (config.channels.entity || config.channels.triple) {
    params_.CreateUniform("entity.embed", {config.entity_vocab, d.embed}, d.embed, rng);
  }
  for (Channel c : kAllChannels) {
    if (!config.channels.Has(c)) continue;
    const std::string p = Prefix(c);
    switch (config.architecture) {
      case Architecture::kArc1:
        params_.CreateUniform(p + ".conv.w", {2 * d.embed, d.filters}, 2 * d.embed, rng);
        params_.CreateUniform(p + ".conv.b", {d.filters}, 2 * d.embed, rng);
        break;
      case Architecture::kMatchPyramid:
        params_.CreateUniform(p + ".conv1.w", {d.filters, 1, 2, 2}, 4, rng);
        params_.CreateUniform(p + ".conv1.b", {d.filters}, 4, rng);
        params_.CreateUniform(p + ".conv2.w", {d.filters, d.filters, 2, 2}, 4 * d.filters,
                              rng);
        params_.CreateUniform(p + ".conv2.b", {d.filters}, 4 * d.filters, rng);
        break;
      case Architecture::kIwan:
        CreateLstm(params_, p + ".lstm_fw", d.embed, d.lstm_hidden, rng);
        CreateLstm(params_, p + ".lstm_bw", d.embed, d.lstm_hidden, rng);
        params_.CreateUniform(p + ".mlp.w", {8 * d.lstm_hidden, d.iwan_output},
                              8 * d.lstm_hidden, rng);
        params_.CreateUniform(p + ".mlp.b", {d.iwan_output}, 8 * d.lstm_hidden, rng);
        break;
    }
  }
  const std::size_t fused = 3 * FeatureDim();
  params_.CreateUniform("fuse.w1", {fused, d.fusion_hidden}, fused, rng);
  params_.CreateUniform("fuse.b1", {d.fusion_hidden}, fused, rng);
  params_.CreateUniform("fuse.w2", {d.fusion_hidden, 3}, d.fusion_hidden, rng);
  params_.CreateUniform("fuse.b2", {3}, d.fusion_hidden, rng);
}

Matcher::Matcher(const MatcherConfig& config, ParameterSet params)
    : Matcher(config, 0) {
  params_.CopyValuesFrom(params);
  for (const auto& [name, t] : params.tensors()) {
    if (!params_.Contains(name)) throw DataError("unexpected parameter '" + name + "'");
  }
}

std::size_t Matcher::FeatureDim() const {
  switch (config_.architecture) {
    case Architecture::kArc1:
      return 2 * config_.dims.filters;
    case Architecture::kMatchPyramid:
      return 4 * config_.dims.filters;
    case Architecture::kIwan:
      return config_.dims.iwan_output;
  }
  return 0;
}

Tensor Matcher::Embed(Channel c, const ChannelizedInput& x) const {
  switch (c) {
    case Channel::kToken: {
      const std::size_t n = std::max<std::size_t>(x.token_length, 1);
      return ad::EmbeddingLookup(params_.Get("token.embed"),
                                 std::span(x.tokens.data(), n));
    }
    case Channel::kEntity: {
      const std::size_t n = std::max<std::size_t>(x.entity_length, 1);
      return ad::EmbeddingLookup(params_.Get("entity.embed"),
                                 std::span(x.entities.data(), n));
    }
    case Channel::kTriple: {
      const Tensor& table = params_.Get("entity.embed");
      if (x.triple_length == 0) {
        const std::int64_t null_id = EntityVocab::kNull;
        return ad::EmbeddingLookup(table, std::span(&null_id, 1));
      }
      const std::size_t n = x.triple_length;
      std::vector<std::int64_t> ids;
      for (std::size_t i = 0; i < n; ++i) {
        ids.insert(ids.end(), x.triples[i].begin(), x.triples[i].end());
      }
      Tensor avg(ad::Shape{n, 3 * n});
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < 3; ++k) avg.mutable_values()[i * 3 * n + 3 * i + k] = 1.0 / 3.0;
      }
      return ad::MatMul(avg, ad::EmbeddingLookup(table, ids));
    }
  }
  throw UsageError("unknown channel");
}

Tensor Matcher::Arc1(const std::string& p, const Tensor& q, const Tensor& d) const {
  const Tensor& w = params_.Get(p + ".conv.w");
  const Tensor& b = params_.Get(p + ".conv.b");
  auto encode = [&](const Tensor& x) {
    return ad::MaxOverRows(ad::Relu(ad::Conv1d(x, w, b, 2, 1)));
  };
  return ad::Concat({encode(q), encode(d)}, 0);
}

Tensor Matcher::Pyramid(const std::string& p, const Tensor& q, const Tensor& d) const {
  Tensor m = ad::CosineSimilarityMatrix(q, d);
  Tensor x = ad::Reshape(m, {1, q.dim(0), d.dim(0)});
  x = ad::Relu(ad::Conv2d(x, params_.Get(p + ".conv1.w"), params_.Get(p + ".conv1.b"), 1, 1));
  x = ad::MaxPool2d(x, 2, 2);
  x = ad::Relu(ad::Conv2d(x, params_.Get(p + ".conv2.w"), params_.Get(p + ".conv2.b"), 1, 1));
  x = ad::AdaptiveMaxPool2d(x, 2, 2);
  return ad::Reshape(x, {x.size()});
}

std::pair<Tensor, Tensor> OrthogonalDecomposition(const Tensor& h, const Tensor& a) {
  Tensor parallel = ad::ParallelComponent(h, a);
  return {parallel, ad::Sub(h, parallel)};
}

Tensor Matcher::Iwan(const std::string& p, const Tensor& q, const Tensor& d) const {
  const LstmParams fw{params_.Get(p + ".lstm_fw.w_input"), params_.Get(p + ".lstm_fw.w_hidden"),
                      params_.Get(p + ".lstm_fw.bias")};
  const LstmParams bw{params_.Get(p + ".lstm_bw.w_input"), params_.Get(p + ".lstm_bw.w_hidden"),
                      params_.Get(p + ".lstm_bw.bias")};
  Tensor qh = Bilstm(q, fw, bw);
  Tensor dh = Bilstm(d, fw, bw);
  const double scale = 1.0 / std::sqrt(static_cast<double>(qh.dim(1)));
  Tensor scores = ad::Scale(ad::MatMul(qh, ad::Transpose(dh)), scale);
  Tensor qa = ad::MatMul(ad::Softmax(scores), dh);
  Tensor da = ad::MatMul(ad::Softmax(ad::Transpose(scores)), qh);
  auto [qp, qo] = OrthogonalDecomposition(qh, qa);
  auto [dp, dpo] = OrthogonalDecomposition(dh, da);
  Tensor pooled = ad::Concat(
      {ad::MeanRows(qp), ad::MeanRows(qo), ad::MeanRows(dp), ad::MeanRows(dpo)}, 0);
  Tensor row = ad::Reshape(pooled, {1, pooled.size()});
  Tensor out = ad::Relu(Linear(row, params_.Get(p + ".mlp.w"), params_.Get(p + ".mlp.b")));
  return ad::Reshape(out, {out.size()});
}

Tensor Matcher::ChannelFeatures(Channel c, const ChannelizedInput& q,
                                const ChannelizedInput& d) const {
  if (!config_.channels.Has(c)) return Tensor(ad::Shape{FeatureDim()});
  Tensor eq = Embed(c, q);
  Tensor ed = Embed(c, d);
  const std::string p = Prefix(c);
  switch (config_.architecture) {
    case Architecture::kArc1:
      return Arc1(p, eq, ed);
    case Architecture::kMatchPyramid:
      return Pyramid(p, eq, ed);
    case Architecture::kIwan:
      return Iwan(p, eq, ed);
  }
  throw UsageError("unknown architecture");
}

SimilarityFeatures Matcher::Features(const ChannelizedInput& q,
                                     const ChannelizedInput& d) const {
  return {ChannelFeatures(Channel::kToken, q, d), ChannelFeatures(Channel::kEntity, q, d),
          ChannelFeatures(Channel::kTriple, q, d)};
}

Tensor Matcher::Classify(const Tensor& fused) const {
  if (fused.rank() != 1 || fused.size() != 3 * FeatureDim()) {
    throw ShapeError("fusion input has shape " + ad::ShapeString(fused.shape()) +
                     ", expected [" + std::to_string(3 * FeatureDim()) + "]");
  }
  Tensor row = ad::Reshape(fused, {1, fused.size()});
  Tensor hidden = ad::Relu(Linear(row, params_.Get("fuse.w1"), params_.Get("fuse.b1")));
  return Linear(hidden, params_.Get("fuse.w2"), params_.Get("fuse.b2"));
}

Tensor Matcher::Logits(const ChannelizedInput& q, const ChannelizedInput& d) const {
  return Classify(Features(q, d).Fused());
}

std::array<double, 3> Matcher::Predict(const ChannelizedInput& q,
                                       const ChannelizedInput& d) const {
  Tensor s = ad::Softmax(Logits(q, d));
  return {s[0], s[1], s[2]};
}

}  // namespace kaqa
