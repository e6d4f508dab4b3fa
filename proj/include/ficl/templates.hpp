#pragma once

#include <string>
#include <vector>

#include "ficl/common.hpp"

namespace ficl {

// A task prompt template. The `[example]` section is the demonstration block
// (placeholders: {text}, {aspect}, {target}, {premise}, {hypothesis},
// {prediction}, {label}, {feedback}); the `[test]` section is the trailing
// test block whose last line is the formatting word awaiting the label.
// Line order and punctuation are normative.
struct PromptTemplate {
  std::string id;
  std::string instruction;
  std::vector<std::string> example_lines;
  std::vector<std::string> test_lines;
};

// Parses the sectioned template text ([instruction] / [example] / [test]).
PromptTemplate parse_template(const std::string& id, const std::string& text);

// The template's text form, as shipped under templates/<id>.tmpl.
const std::string& template_source(const std::string& id);

const PromptTemplate& builtin_template(const std::string& id);
bool template_exists(const std::string& id);
std::vector<std::string> template_ids();

}  // namespace ficl
