#ifndef KAQA_JSON_IO_H_
#define KAQA_JSON_IO_H_

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "kaqa/anchoring.h"

namespace kaqa {

// {"entities": [{"id","surface","start","end"}],
//  "triples": [{"head","relation","tail","score"}]}
nlohmann::json AnchorSetToJson(const AnchorSet& anchors);
// Inverse of AnchorSetToJson for the fields it carries; triple mentions keep
// only their entity ids.
AnchorSet AnchorSetFromJson(const nlohmann::json& j);

// AnchorSetToJson plus a "candidates" array with rb / ntd / kr_pass / final
// scores and acceptance of every candidate.
nlohmann::json ExplainJson(const AnchorTrace& trace, double threshold);

// JSONL sidecar: a {"fingerprint": ...} header line, then one
// {"text": ..., "anchors": {...}} record per text. The fingerprint identifies
// the KG / config / model that produced the anchors; a cache whose
// fingerprint differs from the expected one loads as empty.
using AnchorCache = std::map<std::string, AnchorSet>;
AnchorCache LoadAnchorCache(const std::filesystem::path& path,
                            const std::string& fingerprint);
void SaveAnchorCache(const std::filesystem::path& path, const AnchorCache& cache,
                     const std::string& fingerprint);

}  // namespace kaqa

#endif  // KAQA_JSON_IO_H_
