#include "kaqa/synthetic.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "kaqa/anchoring.h"
#include "kaqa/text.h"

namespace kaqa {
namespace {

struct EntitySpec {
  EntityId id;
  const char* type;
  std::vector<std::string> names;  // canonical first
};

// Ids: products 1-9, objects 10-39, operations 40-79, synonym entities 80+.
const std::vector<EntitySpec>& EntitySpecs() {
  static const std::vector<EntitySpec> specs = {
      {1, "product", {"WeChat", "wechat app", "vx"}},
      {2, "product", {"QQ", "qq app", "tencent qq"}},
      {3, "product", {"Alipay", "ali pay", "zhifubao"}},
      {4, "product", {"Weibo", "sina weibo", "microblog"}},
      {5, "product", {"Taobao", "taobao app", "tb"}},
      {10, "object", {"friend", "buddy"}},
      {11, "object", {"chat log", "chat record", "chat records"}},
      {12, "object", {"group chat", "chat group", "group"}},
      {13, "object", {"moments", "friend circle", "timeline"}},
      {14, "object", {"payment password", "pay password", "pin code"}},
      {15, "object", {"wallet", "balance"}},
      {16, "object", {"bank card", "debit card", "card"}},
      {17, "object", {"account", "user account", "user id"}},
      {18, "object", {"avatar", "profile picture", "profile photo"}},
      {19, "object", {"nickname", "display name", "screen name"}},
      {20, "object", {"post", "status", "weibo post"}},
      {21, "object", {"order", "purchase"}},
      {22, "object", {"shopping cart", "cart", "basket"}},
      {23, "object", {"message", "msg", "text message"}},
      {24, "object", {"photo", "image"}},
      {25, "object", {"red packet", "red envelope", "hongbao"}},
      {26, "object", {"phone number", "mobile number", "cell number"}},
      {40, "operation", {"delete", "deleted", "remove", "removed"}},
      {41, "operation", {"recover", "recovered", "get back", "retrieve"}},
      {42, "operation", {"add", "added"}},
      {43, "operation", {"block", "blocked", "blacklist", "blacklisted"}},
      {44, "operation", {"unblock", "unblocked"}},
      {45, "operation", {"change", "changed", "modify", "modified"}},
      {46, "operation", {"reset"}},
      {47, "operation", {"bind", "bound", "link", "linked"}},
      {48, "operation", {"unbind", "unbound", "unlink", "unlinked"}},
      {49, "operation", {"export", "exported", "back up", "backed up"}},
      {50, "operation", {"hide", "hid", "hidden"}},
      {51, "operation", {"pin", "pinned"}},
      {52, "operation", {"mute", "muted", "silence", "silenced"}},
      {53, "operation", {"send", "sent"}},
      {54, "operation", {"withdraw", "withdrew", "recall", "recalled"}},
      {55, "operation", {"cancel", "cancelled", "canceled"}},
      {56, "operation", {"log in", "login", "sign in", "logged in"}},
      {57, "operation", {"log out", "logout", "sign out", "logged out"}},
      {58, "operation", {"register", "registered", "sign up", "signed up"}},
      {59, "operation", {"refund", "refunded"}},
      {60, "operation", {"freeze", "frozen", "lock", "locked"}},
      {61, "operation", {"unfreeze", "unfrozen", "unlock", "unlocked"}},
      {80, "product", {"weixin", "wx"}},
      {81, "object", {"contact", "contacts"}},
      {82, "object", {"chat history", "chat histories"}},
      {83, "object", {"picture", "pic", "pictures"}},
      {84, "operation", {"restore", "restored"}},
      {85, "operation", {"erase", "erased", "wipe", "wiped"}},
      {86, "operation", {"update", "updated"}},
  };
  return specs;
}

struct TripleSpec {
  EntityId head;
  RelationKind relation;
  std::vector<EntityId> tails;
};

const std::vector<TripleSpec>& TripleSpecs() {
  using R = RelationKind;
  static const std::vector<TripleSpec> specs = {
      // Objects and the products they belong to.
      {10, R::kComponentOf, {1, 2}},
      {11, R::kComponentOf, {1, 2}},
      {12, R::kComponentOf, {1, 2}},
      {13, R::kComponentOf, {1}},
      {14, R::kComponentOf, {1, 3}},
      {15, R::kComponentOf, {1, 3}},
      {16, R::kComponentOf, {1, 3}},
      {17, R::kComponentOf, {1, 2, 3, 4, 5}},
      {18, R::kComponentOf, {1, 2, 4}},
      {19, R::kComponentOf, {1, 2, 4}},
      {20, R::kComponentOf, {4}},
      {21, R::kComponentOf, {5}},
      {22, R::kComponentOf, {5}},
      {23, R::kComponentOf, {1, 2, 4}},
      {24, R::kComponentOf, {1, 2, 4}},
      {25, R::kComponentOf, {1, 2, 3}},
      {26, R::kComponentOf, {1, 2, 3, 5}},
      // Operations.
      {1, R::kHasOperation, {40, 41, 56, 57, 86}},
      {2, R::kHasOperation, {40, 41, 56, 57, 86}},
      {3, R::kHasOperation, {40, 41, 56, 57, 86}},
      {4, R::kHasOperation, {40, 41, 56, 57, 86}},
      {5, R::kHasOperation, {40, 41, 56, 57, 86}},
      {10, R::kHasOperation, {42, 40, 41, 43, 44, 52}},
      {11, R::kHasOperation, {40, 41, 49, 50}},
      {12, R::kHasOperation, {42, 40, 52, 51, 50}},
      {13, R::kHasOperation, {53, 40, 50, 43}},
      {14, R::kHasOperation, {45, 46}},
      {15, R::kHasOperation, {60, 61, 50}},
      {16, R::kHasOperation, {47, 48, 60, 61}},
      {17, R::kHasOperation, {60, 61, 40, 41, 56, 57, 58}},
      {18, R::kHasOperation, {45, 50}},
      {19, R::kHasOperation, {45, 50}},
      {20, R::kHasOperation, {53, 40, 50, 51, 41}},
      {21, R::kHasOperation, {55, 59, 40, 41}},
      {22, R::kHasOperation, {42, 40}},
      {23, R::kHasOperation, {53, 54, 40, 41, 51, 52}},
      {24, R::kHasOperation, {53, 40, 41, 49, 50}},
      {25, R::kHasOperation, {53, 54, 59}},
      {26, R::kHasOperation, {47, 48, 45, 50}},
      // Synonyms.
      {80, R::kSynonym, {1}},
      {81, R::kSynonym, {10}},
      {82, R::kSynonym, {11}},
      {83, R::kSynonym, {24}},
      {84, R::kSynonym, {41}},
      {85, R::kSynonym, {40}},
      {86, R::kSynonym, {45}},
      // Hypernym -> hyponym.
      {23, R::kHypernymHyponym, {24, 25}},
      {17, R::kHypernymHyponym, {18, 19, 26}},
  };
  return specs;
}

struct Template {
  std::string text;
  bool distractor;
};

// {P} product, {O} object, {A} operation, {B} distractor operation.
const std::vector<Template>& Templates() {
  static const std::vector<Template> templates = {
      {"how to {A} {P} {O} if she has {B} me", true},
      {"how to {A} {P} {O} if it was {B}", true},
      {"how to {A} {O} in {P} if i {B} it", true},
      {"{P} {O} was {B} how can i {A} it", true},
      {"i {B} my {O} on {P} by mistake can i {A} it", true},
      {"can i {A} a {B} {O} in {P}", true},
      {"is it possible to {A} {O} on {P} after it was {B}", true},
      {"{P} {A} {O} that was {B} yesterday", true},
      {"my {O} in {P} was never {B} so why can i not {A} it", true},
      {"{A} {P} {O}", false},
      {"how do i {A} my {O} in {P}", false},
      {"where to {A} the {O} of {P}", false},
  };
  return templates;
}

std::string Fill(const std::string& text, const std::string& key, const std::string& value) {
  std::string out = text;
  const std::size_t pos = out.find(key);
  if (pos != std::string::npos) out.replace(pos, key.size(), value);
  return out;
}

}  // namespace

KnowledgeGraph SyntheticKg() {
  std::vector<Entity> entities;
  for (const EntitySpec& s : EntitySpecs()) {
    Entity e;
    e.id = s.id;
    e.canonical_name = s.names.front();
    e.aliases.assign(s.names.begin() + 1, s.names.end());
    e.type = s.type;
    entities.push_back(std::move(e));
  }
  std::vector<Triple> triples;
  for (const TripleSpec& s : TripleSpecs()) {
    for (EntityId tail : s.tails) triples.push_back({s.head, s.relation, tail, 1.0});
  }
  return KnowledgeGraph::Build(std::move(entities), std::move(triples));
}

std::vector<Pattern> SyntheticPatterns() {
  return {
      {"<OP> the <OBJ>", RelationKind::kHasOperation, "OBJ", "OP"},
      {"<OP> my <OBJ>", RelationKind::kHasOperation, "OBJ", "OP"},
      {"<OBJ> of <PROD>", RelationKind::kComponentOf, "OBJ", "PROD"},
      {"<OBJ> in <PROD>", RelationKind::kComponentOf, "OBJ", "PROD"},
  };
}

std::vector<std::string> SyntheticCorpus(const KnowledgeGraph& kg, std::size_t n,
                                         std::uint64_t seed) {
  Rng rng(seed);
  std::vector<const Triple*> triples;
  for (const Triple& t : kg.triples()) {
    if (t.relation == RelationKind::kHasOperation || t.relation == RelationKind::kComponentOf) {
      triples.push_back(&t);
    }
  }
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Triple& t = *rng.Pick(triples);
    const std::string head = kg.entity(t.head).canonical_name;
    const std::string tail = kg.entity(t.tail).canonical_name;
    if (t.relation == RelationKind::kHasOperation) {
      out.push_back(rng.Bernoulli(0.5) ? "how to " + tail + " the " + head
                                       : "i want to " + tail + " my " + head + " today");
    } else {
      out.push_back(rng.Bernoulli(0.5) ? "where is the " + head + " of " + tail
                                       : "the " + head + " in " + tail + " is gone");
    }
  }
  return out;
}

SyntheticGenerator::SyntheticGenerator(const KnowledgeGraph& kg,
                                       const SyntheticOptions& options)
    : kg_(kg), options_(options), rng_(options.seed) {
  for (const auto& [id, e] : kg.entities()) {
    const EntityId rep = kg.Normalize(id);
    auto& names = surfaces_[rep];
    std::vector<std::string> own = {e.canonical_name};
    for (const std::string& a : e.aliases) {
      if (a != e.canonical_name) own.push_back(a);
    }
    // The representative's canonical name leads the surface list.
    names.insert(id == rep ? names.begin() : names.end(), own.begin(), own.end());
    if (id == rep && e.type == "product") products_.push_back(id);
  }
  for (const Triple& t : kg.triples()) {
    const EntityId h = kg.Normalize(t.head), tl = kg.Normalize(t.tail);
    if (t.relation == RelationKind::kComponentOf) {
      objects_of_[tl].push_back(h);
      products_of_[h].push_back(tl);
    } else if (t.relation == RelationKind::kHasOperation &&
               kg.entity(h).type == "object") {
      operations_of_[h].push_back(tl);
    }
  }
  if (products_.empty()) throw DataError("synthetic generator needs product entities");
}

std::string SyntheticGenerator::Surface(EntityId id) {
  const auto& names = surfaces_.at(kg_.Normalize(id));
  std::vector<double> cdf;
  double total = 0.0;
  for (std::size_t r = 0; r < names.size(); ++r) {
    total += 1.0 / std::pow(static_cast<double>(r + 1), options_.alias_skew);
    cdf.push_back(total);
  }
  const double u = rng_.Uniform() * total;
  const std::size_t i = std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
  return names[std::min(i, names.size() - 1)];
}

QueryFrame SyntheticGenerator::RandomFrame() {
  QueryFrame f;
  f.product = rng_.Pick(products_);
  f.object = rng_.Pick(objects_of_.at(f.product));
  const auto& ops = operations_of_.at(f.object);
  f.operation = rng_.Pick(ops);
  if (ops.size() > 1 && rng_.Bernoulli(options_.distractor_rate)) {
    do {
      f.distractor = rng_.Pick(ops);
    } while (f.distractor == f.operation);
  }
  return f;
}

std::string SyntheticGenerator::Render(const QueryFrame& frame) {
  std::vector<const Template*> usable;
  for (const Template& t : Templates()) {
    if (t.distractor == (frame.distractor != 0)) usable.push_back(&t);
  }
  std::string text = rng_.Pick(usable)->text;
  text = Fill(text, "{P}", Surface(frame.product));
  text = Fill(text, "{O}", Surface(frame.object));
  text = Fill(text, "{A}", Surface(frame.operation));
  if (frame.distractor != 0) text = Fill(text, "{B}", Surface(frame.distractor));
  return text;
}

std::vector<MatchExample> SyntheticGenerator::Matching(std::size_t n) {
  std::vector<MatchExample> out;
  out.reserve(n);
  while (out.size() < n) {
    const QueryFrame q = RandomFrame();
    QueryFrame t = q;
    int label = kSimilar;
    const double u = rng_.Uniform();
    const auto& ops = operations_of_.at(q.object);
    if (u < 0.35) {
      // Same reading, fresh wording and distractor.
      t.distractor = 0;
      if (ops.size() > 1 && rng_.Bernoulli(options_.distractor_rate)) {
        do {
          t.distractor = rng_.Pick(ops);
        } while (t.distractor == t.operation);
      }
    } else if (u < 0.7) {
      if (ops.size() < 2) continue;
      label = kRelated;
      do {
        t.operation = rng_.Pick(ops);
      } while (t.operation == q.operation);
      // Swap roles so both texts mention the same operations.
      t.distractor = rng_.Bernoulli(0.7) ? q.operation : 0;
    } else {
      label = kUnrelated;
      const auto& owners = products_of_.at(q.object);
      if (owners.size() > 1 && rng_.Bernoulli(0.5)) {
        do {
          t.product = rng_.Pick(owners);
        } while (t.product == q.product);
      } else {
        const auto& objects = objects_of_.at(q.product);
        if (objects.size() < 2) continue;
        do {
          t.object = rng_.Pick(objects);
        } while (t.object == q.object);
        const auto& tops = operations_of_.at(t.object);
        t.operation = std::find(tops.begin(), tops.end(), q.operation) != tops.end()
                          ? q.operation
                          : rng_.Pick(tops);
        t.distractor = 0;
        if (tops.size() > 1 && rng_.Bernoulli(options_.distractor_rate)) {
          do {
            t.distractor = rng_.Pick(tops);
          } while (t.distractor == t.operation);
        }
      }
    }
    out.push_back({Render(q), Render(t), label});
  }
  return out;
}

std::vector<DisambExample> SyntheticGenerator::Disambiguation(std::size_t queries,
                                                              bool with_component_of) {
  std::vector<DisambExample> out;
  std::size_t made = 0;
  while (made < queries) {
    QueryFrame f = RandomFrame();
    if (f.distractor == 0) continue;
    const std::string text = Render(f);
    const auto tokens = Tokenize(text);
    const auto mentions = ExtractEntitiesFmm(tokens, kg_, text, TokenizerMode::kWhitespace);
    std::set<EntityId> seen;
    for (const auto& m : mentions) seen.insert(m.entity);
    if (seen.size() != mentions.size()) continue;
    std::vector<DisambExample> rows;
    for (const TripleCandidate& c : GenerateTripleCandidates(mentions, kg_)) {
      const bool correct = c.head.entity == kg_.Normalize(f.object) &&
                           c.tail.entity == kg_.Normalize(
                               c.relation == RelationKind::kHasOperation ? f.operation
                                                                         : f.product);
      if (c.relation == RelationKind::kComponentOf) {
        if (with_component_of && correct) {
          rows.push_back({text, c.head.surface, c.relation, c.tail.surface, 1});
        }
        continue;
      }
      rows.push_back({text, c.head.surface, c.relation, c.tail.surface, correct ? 1 : 0});
    }
    const auto has_op = std::count_if(rows.begin(), rows.end(), [](const DisambExample& r) {
      return r.relation == RelationKind::kHasOperation;
    });
    if (has_op < 2) continue;
    out.insert(out.end(), rows.begin(), rows.end());
    ++made;
  }
  return out;
}

}  // namespace kaqa
