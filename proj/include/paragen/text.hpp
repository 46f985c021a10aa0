// Word-level tokenization and light string normalization.
// The exact tokenizer rules are spelled out in docs/tokenizer.md.
#pragma once

#include <string>
#include <vector>

namespace paragen::text {

// Lowercases ASCII letters, splits punctuation into single-character
// tokens, keeps alphanumeric runs (and non-ASCII bytes) together.
// Deterministic; empty input gives an empty list.
std::vector<std::string> tokenize(const std::string& raw);

// Joins tokens with single spaces. tokenize(join(tokenize(t))) == tokenize(t).
std::string join(const std::vector<std::string>& tokens);

std::string to_lower(std::string s);

// Trims and collapses runs of whitespace to single spaces.
std::string normalize_whitespace(const std::string& s);

}  // namespace paragen::text
