#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace commentcav {

enum class CommentSyntax { Line, Block };
enum class Placement { Standalone, Trailing };

// COMMENT is the union of the three subtypes.
enum class ConceptKind { Comment, Javadoc, Inline, Multiline };

const char * to_string(CommentSyntax s);
const char * to_string(Placement p);
const char * to_string(ConceptKind k);
std::optional<ConceptKind> parse_concept(std::string_view name);

// One comment located in a source buffer. Offsets are bytes, end exclusive;
// lines are 1-based.
struct CommentSpan {
    size_t byte_start = 0;
    size_t byte_end = 0;
    size_t line_start = 1;
    size_t line_end = 1;
    CommentSyntax syntax = CommentSyntax::Line;
    Placement placement = Placement::Standalone;
    std::string text;

    bool operator==(const CommentSpan &) const = default;
};

struct ConceptGroup {
    ConceptKind kind = ConceptKind::Inline; // never Comment
    std::vector<CommentSpan> spans;
};

// Lexical regions of Java source. Everything that is not a comment or a
// literal is Code.
enum class RegionKind { Code, LineComment, BlockComment, StringLiteral, CharLiteral, TextBlock };

struct Region {
    RegionKind kind = RegionKind::Code;
    size_t begin = 0;
    size_t end = 0;
};

// Splits source into contiguous regions covering [0, size). String and char
// literals end at an unescaped closing quote or at the end of the line; text
// blocks and block comments run to their terminator or to end of input.
std::vector<Region> lex_regions(std::string_view source);

std::vector<CommentSpan> scan_comments(std::string_view source);

// Throws std::invalid_argument when a span does not match source.
std::vector<ConceptGroup> classify_concepts(std::string_view source,
                                            const std::vector<CommentSpan> & spans);

std::string strip_concept(std::string_view source, ConceptKind kind);

bool contains_concept(std::string_view source, ConceptKind kind);

} // namespace commentcav
