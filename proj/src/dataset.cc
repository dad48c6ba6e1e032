#include "kaqa/dataset.h"

#include <fstream>

namespace kaqa {
namespace {

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t tab = line.find('\t', pos);
    fields.push_back(line.substr(pos, tab == std::string::npos ? tab : tab - pos));
    if (tab == std::string::npos) break;
    pos = tab + 1;
  }
  return fields;
}

[[noreturn]] void Fail(const std::filesystem::path& path, std::size_t line,
                       const std::string& msg) {
  throw DataError(path.string() + ":" + std::to_string(line) + ": " + msg);
}

int ParseLabel(const std::string& s, int max_label, const std::filesystem::path& path,
               std::size_t line) {
  if (s.size() != 1 || s[0] < '0' || s[0] > '0' + max_label) {
    Fail(path, line, "label must be an integer in [0, " + std::to_string(max_label) +
                         "], got '" + s + "'");
  }
  return s[0] - '0';
}

template <typename Fn>
void ForEachRow(const std::filesystem::path& path, std::size_t columns, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = SplitTabs(line);
    if (fields.size() != columns) {
      Fail(path, lineno, "expected " + std::to_string(columns) + " tab-separated fields, got " +
                             std::to_string(fields.size()));
    }
    fn(fields, lineno);
  }
}

std::ofstream OpenForWrite(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void CheckField(const std::string& s, const char* what) {
  if (s.find_first_of("\t\n") != std::string::npos) {
    throw DataError(std::string(what) + " contains a tab or newline: " + s);
  }
}

}  // namespace

std::vector<MatchExample> LoadMatchDataset(const std::filesystem::path& path) {
  std::vector<MatchExample> out;
  ForEachRow(path, 3, [&](const std::vector<std::string>& f, std::size_t line) {
    if (f[0].empty() || f[1].empty()) Fail(path, line, "query and title must be nonempty");
    out.push_back({f[0], f[1], ParseLabel(f[2], 2, path, line)});
  });
  return out;
}

void SaveMatchDataset(const std::filesystem::path& path,
                      const std::vector<MatchExample>& examples) {
  auto out = OpenForWrite(path);
  for (const MatchExample& e : examples) {
    CheckField(e.query, "query");
    CheckField(e.title, "title");
    out << e.query << '\t' << e.title << '\t' << e.label << '\n';
  }
}

std::vector<DisambExample> LoadDisambDataset(const std::filesystem::path& path) {
  std::vector<DisambExample> out;
  ForEachRow(path, 5, [&](const std::vector<std::string>& f, std::size_t line) {
    auto rel = ParseRelation(f[2]);
    if (!rel) Fail(path, line, "unknown relation '" + f[2] + "'");
    if (f[0].empty() || f[1].empty() || f[3].empty()) {
      Fail(path, line, "query, head and tail must be nonempty");
    }
    out.push_back({f[0], f[1], *rel, f[3], ParseLabel(f[4], 1, path, line)});
  });
  return out;
}

void SaveDisambDataset(const std::filesystem::path& path,
                       const std::vector<DisambExample>& examples) {
  auto out = OpenForWrite(path);
  for (const DisambExample& e : examples) {
    CheckField(e.query, "query");
    out << e.query << '\t' << e.head << '\t' << RelationName(e.relation) << '\t' << e.tail
        << '\t' << e.label << '\n';
  }
}

SplitSizes ComputeSplitSizes(std::size_t n) {
  const std::size_t train = n * 8 / 10;
  const std::size_t valid = n / 10;
  return {train, valid, n - train - valid};
}

}  // namespace kaqa
