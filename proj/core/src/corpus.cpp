#include "mtl/corpus.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "mtl/csv.hpp"

namespace mtl {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open dataset file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(first, last - first + 1));
}

// Returns -1 when the text is not a binary label.
int parse_label(std::string_view raw) {
  const std::string t = trim(raw);
  if (t == "0" || t == "0.0") return 0;
  if (t == "1" || t == "1.0") return 1;
  return -1;
}

std::string json_field_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return {};
  return v.dump();
}

struct RawRow {
  std::size_t row = 0;  // 1-based data row
  std::string id;
  std::string text;
  std::string label;
};

std::vector<RawRow> read_delimited(const std::filesystem::path& path, const DatasetSchema& schema) {
  const auto records = parse_csv(read_file(path), schema.delimiter);
  require(!records.empty(), ErrorCode::kParse, path.string() + ": missing header row");
  const auto& header = records.front().fields;
  auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    fail(ErrorCode::kParse, path.string() + ": no column named '" + name + "'");
  };
  const std::size_t text_col = column(schema.text_column);
  const std::size_t label_col = column(schema.label_column);
  const bool has_id = !schema.id_column.empty();
  const std::size_t id_col = has_id ? column(schema.id_column) : 0;

  std::vector<RawRow> rows;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& f = records[r].fields;
    const std::size_t needed = std::max({text_col, label_col, id_col}) + 1;
    require(f.size() >= needed, ErrorCode::kParse,
            path.string() + ": row " + std::to_string(r) + " (line " + std::to_string(records[r].line) + ") has " +
                std::to_string(f.size()) + " fields, expected at least " + std::to_string(needed));
    rows.push_back({r, has_id ? trim(f[id_col]) : std::string{}, f[text_col], f[label_col]});
  }
  return rows;
}

std::vector<RawRow> read_json_lines(const std::filesystem::path& path, const DatasetSchema& schema) {
  std::istringstream in(read_file(path));
  std::vector<RawRow> rows;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    require(!j.is_discarded() && j.is_object(), ErrorCode::kParse,
            path.string() + ": row " + std::to_string(row) + " is not a JSON object");
    require(j.contains(schema.text_column) && j.contains(schema.label_column), ErrorCode::kParse,
            path.string() + ": row " + std::to_string(row) + " lacks the text or label field");
    RawRow raw{row, {}, json_field_text(j[schema.text_column]), json_field_text(j[schema.label_column])};
    if (!schema.id_column.empty()) {
      require(j.contains(schema.id_column), ErrorCode::kParse,
              path.string() + ": row " + std::to_string(row) + " lacks the id field");
      raw.id = json_field_text(j[schema.id_column]);
    }
    rows.push_back(std::move(raw));
  }
  return rows;
}

std::string join_rows(const std::vector<std::size_t>& rows) {
  std::string out;
  for (std::size_t i = 0; i < rows.size() && i < 20; ++i) {
    if (i) out += ", ";
    out += std::to_string(rows[i]);
  }
  if (rows.size() > 20) out += ", ... (" + std::to_string(rows.size()) + " total)";
  return out;
}

}  // namespace

const char* to_string(Task task) { return task == Task::kDepression ? "depression" : "stress"; }

Task parse_task(std::string_view text) {
  if (text == "depression") return Task::kDepression;
  if (text == "stress") return Task::kStress;
  fail(ErrorCode::kConfig, "unknown task '" + std::string(text) + "' (expected depression or stress)");
}

const char* to_string(SplitName split) {
  switch (split) {
    case SplitName::kTrain: return "train";
    case SplitName::kValidation: return "validation";
    case SplitName::kTest: return "test";
  }
  return "?";
}

SplitName parse_split(std::string_view text) {
  if (text == "train") return SplitName::kTrain;
  if (text == "validation" || text == "val") return SplitName::kValidation;
  if (text == "test") return SplitName::kTest;
  fail(ErrorCode::kConfig, "unknown split '" + std::string(text) + "'");
}

std::vector<LabeledPost> load_dataset(const std::filesystem::path& path, Task task, const DatasetSchema& schema) {
  require(std::filesystem::exists(path), ErrorCode::kIo, "dataset file " + path.string() + " does not exist");
  require(!schema.text_column.empty() && !schema.label_column.empty(), ErrorCode::kConfig,
          "schema must name a text column and a label column");
  const auto rows =
      schema.format == FileFormat::kDelimited ? read_delimited(path, schema) : read_json_lines(path, schema);

  std::vector<std::size_t> bad_labels, empty_texts;
  std::vector<LabeledPost> posts;
  posts.reserve(rows.size());
  std::unordered_map<std::string, std::size_t> seen;
  for (const RawRow& raw : rows) {
    const int label = parse_label(raw.label);
    if (label < 0) {
      bad_labels.push_back(raw.row);
      continue;
    }
    if (trim(raw.text).empty()) {
      empty_texts.push_back(raw.row);
      continue;
    }
    std::string id = schema.id_column.empty() ? std::string(to_string(task)) + "-" + std::to_string(raw.row) : raw.id;
    require(!id.empty(), ErrorCode::kParse, path.string() + ": row " + std::to_string(raw.row) + " has an empty id");
    auto [it, inserted] = seen.emplace(id, raw.row);
    require(inserted, ErrorCode::kParse,
            path.string() + ": duplicate id '" + id + "' in rows " + std::to_string(it->second) + " and " +
                std::to_string(raw.row));
    posts.push_back({std::move(id), raw.text, label, task});
  }
  require(bad_labels.empty(), ErrorCode::kParse,
          path.string() + ": label not in {0,1} at row(s) " + join_rows(bad_labels));
  require(empty_texts.empty(), ErrorCode::kParse, path.string() + ": empty text at row(s) " + join_rows(empty_texts));
  return posts;
}

SplitSizes split_sizes(std::size_t n) {
  const std::size_t train = (7 * n + 5) / 10;
  const std::size_t validation = (n + 5) / 10;
  return {train, validation, n - train - validation};
}

const std::vector<LabeledPost>& SplitCorpus::part(SplitName split) const {
  switch (split) {
    case SplitName::kTrain: return train;
    case SplitName::kValidation: return validation;
    case SplitName::kTest: return test;
  }
  return train;
}

SplitCorpus split_corpus(std::vector<LabeledPost> posts, std::uint64_t seed) {
  require(posts.size() >= kMinimumSplitInput, ErrorCode::kInvalidArgument,
          "refusing to split " + std::to_string(posts.size()) + " posts (need at least " +
              std::to_string(kMinimumSplitInput) + ")");
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(posts);
  const SplitSizes sizes = split_sizes(posts.size());
  SplitCorpus out;
  out.seed = seed;
  auto first = std::make_move_iterator(posts.begin());
  out.train.assign(first, first + static_cast<std::ptrdiff_t>(sizes.train));
  first += static_cast<std::ptrdiff_t>(sizes.train);
  out.validation.assign(first, first + static_cast<std::ptrdiff_t>(sizes.validation));
  first += static_cast<std::ptrdiff_t>(sizes.validation);
  out.test.assign(first, std::make_move_iterator(posts.end()));
  return out;
}

ClassBalance class_balance(const std::vector<LabeledPost>& posts) {
  ClassBalance b;
  for (const auto& p : posts) (p.label == 1 ? b.positives : b.negatives)++;
  return b;
}

void write_split_manifest(const std::filesystem::path& path, const SplitCorpus& split) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write split manifest " + path.string());
  out << "id,split\n";
  for (SplitName name : {SplitName::kTrain, SplitName::kValidation, SplitName::kTest}) {
    for (const auto& p : split.part(name)) out << csv_escape(p.id) << ',' << to_string(name) << '\n';
  }
}

SplitCorpus read_split_manifest(const std::filesystem::path& path, const std::vector<LabeledPost>& posts) {
  const auto records = parse_csv(read_file(path));
  require(!records.empty() && records.front().fields.size() == 2, ErrorCode::kParse,
          path.string() + ": malformed split manifest header");
  std::unordered_map<std::string, const LabeledPost*> by_id;
  for (const auto& p : posts) by_id.emplace(p.id, &p);
  SplitCorpus out;
  std::set<std::string> used;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& f = records[r].fields;
    require(f.size() == 2, ErrorCode::kParse, path.string() + ": row " + std::to_string(r) + " is malformed");
    auto it = by_id.find(f[0]);
    require(it != by_id.end(), ErrorCode::kParse,
            path.string() + ": id '" + f[0] + "' is not present in the dataset");
    require(used.insert(f[0]).second, ErrorCode::kParse, path.string() + ": id '" + f[0] + "' listed twice");
    const SplitName name = parse_split(f[1]);
    std::vector<LabeledPost>& dst =
        name == SplitName::kTrain ? out.train : name == SplitName::kValidation ? out.validation : out.test;
    dst.push_back(*it->second);
  }
  require(used.size() == posts.size(), ErrorCode::kParse,
          path.string() + ": manifest covers " + std::to_string(used.size()) + " of " + std::to_string(posts.size()) +
              " posts");
  return out;
}

}  // namespace mtl
