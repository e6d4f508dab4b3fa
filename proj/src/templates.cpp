#include "ficl/templates.hpp"

#include <map>

namespace ficl {

namespace {

// Shipped verbatim under templates/. The ASC and stance question suffixes
// keep the space before the question mark.
const char* kScTemplate =
    "[instruction]\n"
    "Recognize the sentiment of the sentence.\n"
    "[example]\n"
    "Sentence: {text}\n"
    "Prediction: {prediction}\n"
    "Correct Label: {label}\n"
    "{feedback}\n"
    "[test]\n"
    "Sentence: {text}\n"
    "Correct Label:\n";

const char* kAscTemplate =
    "[instruction]\n"
    "Recognize the sentiment polarity for the given aspect term in the sentence.\n"
    "[example]\n"
    "Sentence: {text} What is the sentiment polarity of the aspect {aspect} ?\n"
    "Prediction: {prediction}\n"
    "Correct Label: {label}\n"
    "{feedback}\n"
    "[test]\n"
    "Sentence: {text} What is the sentiment polarity of the aspect {aspect} ?\n"
    "Correct Label:\n";

const char* kEdTemplate =
    "[instruction]\n"
    "Recognize the emotion of the sentence.\n"
    "[example]\n"
    "Sentence: {text}\n"
    "Prediction: {prediction}\n"
    "Correct Label: {label}\n"
    "{feedback}\n"
    "[test]\n"
    "Sentence: {text}\n"
    "Correct Label:\n";

const char* kStanceTemplate =
    "[instruction]\n"
    "Recognize the stance of the sentence to the given target.\n"
    "[example]\n"
    "Sentence: {text} What is the attitude of sentence toward target {target} ?\n"
    "Prediction: {prediction}\n"
    "Correct Label: {label}\n"
    "{feedback}\n"
    "[test]\n"
    "Sentence: {text} What is the attitude of sentence toward target {target} ?\n"
    "Correct Label:\n";

const char* kIronyTemplate =
    "[instruction]\n"
    "Determine whether the sentence is ironic or not.\n"
    "[example]\n"
    "Sentence: {text}\n"
    "Prediction: {prediction}\n"
    "Correct Label: {label}\n"
    "{feedback}\n"
    "[test]\n"
    "Sentence: {text}\n"
    "Correct Label:\n";

const char* kNliTemplate =
    "[instruction]\n"
    "Recognize textual entailment between the 2 texts.\n"
    "[example]\n"
    "Premise: {premise}\n"
    "Hypothesis: {hypothesis}\n"
    "Prediction: {prediction}\n"
    "Correct Label: {label}\n"
    "{feedback}\n"
    "[test]\n"
    "Premise: {premise}\n"
    "Hypothesis: {hypothesis}\n"
    "Correct Label:\n";

const std::map<std::string, std::string>& sources() {
  static const std::map<std::string, std::string> table = {
      {"sc", kScTemplate},   {"asc", kAscTemplate},       {"ed", kEdTemplate},
      {"stance", kStanceTemplate}, {"irony", kIronyTemplate}, {"nli", kNliTemplate},
  };
  return table;
}

}  // namespace

PromptTemplate parse_template(const std::string& id, const std::string& text) {
  PromptTemplate tmpl;
  tmpl.id = id;
  enum class Section { None, Instruction, Example, Test } section = Section::None;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string line =
        nl == std::string::npos ? text.substr(pos) : text.substr(pos, nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    if (line == "[instruction]") {
      section = Section::Instruction;
      continue;
    }
    if (line == "[example]") {
      section = Section::Example;
      continue;
    }
    if (line == "[test]") {
      section = Section::Test;
      continue;
    }
    if (line.empty() && (section == Section::None || nl == std::string::npos)) continue;
    switch (section) {
      case Section::Instruction:
        if (!line.empty()) tmpl.instruction = line;
        break;
      case Section::Example:
        if (!line.empty()) tmpl.example_lines.push_back(line);
        break;
      case Section::Test:
        if (!line.empty()) tmpl.test_lines.push_back(line);
        break;
      case Section::None:
        throw Error(Errc::SchemaViolation, "template '" + id + "': text before first section");
    }
  }
  if (tmpl.example_lines.empty() || tmpl.test_lines.empty())
    throw Error(Errc::SchemaViolation, "template '" + id + "': missing example or test section");
  return tmpl;
}

const std::string& template_source(const std::string& id) {
  auto it = sources().find(id);
  if (it == sources().end())
    throw Error(Errc::InvalidConfig, "unknown template '" + id + "'");
  return it->second;
}

const PromptTemplate& builtin_template(const std::string& id) {
  static const std::map<std::string, PromptTemplate> parsed = [] {
    std::map<std::string, PromptTemplate> all;
    for (const auto& [tid, text] : sources()) all.emplace(tid, parse_template(tid, text));
    return all;
  }();
  auto it = parsed.find(id);
  if (it == parsed.end()) throw Error(Errc::InvalidConfig, "unknown template '" + id + "'");
  return it->second;
}

bool template_exists(const std::string& id) { return sources().count(id) > 0; }

std::vector<std::string> template_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, _] : sources()) ids.push_back(id);
  return ids;
}

}  // namespace ficl
