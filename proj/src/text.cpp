#include "paragen/text.hpp"

#include <cctype>

namespace paragen::text {

namespace {

inline bool is_space(unsigned char c) { return std::isspace(c) != 0; }

// Word characters: ASCII alphanumerics plus any byte >= 0x80, so UTF-8
// multibyte sequences stay glued to the word they belong to.
inline bool is_word_char(unsigned char c) {
    return std::isalnum(c) != 0 || c >= 0x80;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& raw) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : raw) {
        if (is_space(c)) {
            if (!current.empty()) {
                tokens.push_back(current);
                current.clear();
            }
        } else if (is_word_char(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else {
            if (!current.empty()) {
                tokens.push_back(current);
                current.clear();
            }
            tokens.push_back(std::string(1, static_cast<char>(c)));
        }
    }
    if (!current.empty()) tokens.push_back(current);
    return tokens;
}

std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

std::string to_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string normalize_whitespace(const std::string& s) {
    std::string out;
    bool in_space = true;  // leading whitespace dropped
    for (unsigned char c : s) {
        if (is_space(c)) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out.push_back(' ');
            in_space = false;
            out.push_back(static_cast<char>(c));
        }
    }
    return out;
}

}  // namespace paragen::text
