#include "commentcav/comment_parser.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace commentcav {

const char * to_string(CommentSyntax s) {
    return s == CommentSyntax::Line ? "line" : "block";
}

const char * to_string(Placement p) {
    return p == Placement::Standalone ? "standalone" : "trailing";
}

const char * to_string(ConceptKind k) {
    switch (k) {
        case ConceptKind::Comment:   return "comment";
        case ConceptKind::Javadoc:   return "javadoc";
        case ConceptKind::Inline:    return "inline";
        case ConceptKind::Multiline: return "multiline";
    }
    return "?";
}

std::optional<ConceptKind> parse_concept(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "comment")   return ConceptKind::Comment;
    if (lower == "javadoc")   return ConceptKind::Javadoc;
    if (lower == "inline")    return ConceptKind::Inline;
    if (lower == "multiline") return ConceptKind::Multiline;
    return std::nullopt;
}

namespace {

bool is_blank(char c) {
    return c == ' ' || c == '\t' || c == '\f' || c == '\v';
}

// Skips a quoted literal starting at the opening quote; returns the index one
// past the closing quote, or the index of the terminating newline.
size_t skip_quoted(std::string_view s, size_t i, char quote) {
    ++i;
    while (i < s.size()) {
        const char c = s[i];
        if (c == '\\') {
            if (i + 1 < s.size() && (s[i + 1] == '\n' || s[i + 1] == '\r')) {
                return i + 1;
            }
            i += 2;
            continue;
        }
        if (c == quote) {
            return i + 1;
        }
        if (c == '\n' || c == '\r') {
            return i;
        }
        ++i;
    }
    return s.size();
}

size_t skip_text_block(std::string_view s, size_t i) {
    i += 3;
    while (i < s.size()) {
        if (s[i] == '\\') {
            i += 2;
            continue;
        }
        if (s.compare(i, 3, R"(""")") == 0) {
            return i + 3;
        }
        ++i;
    }
    return s.size();
}

} // namespace

std::vector<Region> lex_regions(std::string_view s) {
    std::vector<Region> out;
    size_t code_start = 0;
    size_t i = 0;
    auto emit = [&](RegionKind kind, size_t begin, size_t end) {
        if (code_start < begin) {
            out.push_back({RegionKind::Code, code_start, begin});
        }
        out.push_back({kind, begin, end});
        code_start = end;
    };
    while (i < s.size()) {
        const char c = s[i];
        if (c == '/' && i + 1 < s.size() && s[i + 1] == '/') {
            size_t end = s.find('\n', i);
            if (end == std::string_view::npos) {
                end = s.size();
            }
            if (end > i && s[end - 1] == '\r') {
                --end;
            }
            emit(RegionKind::LineComment, i, end);
            i = end;
        } else if (c == '/' && i + 1 < s.size() && s[i + 1] == '*') {
            const size_t close = s.find("*/", i + 2);
            const size_t end = close == std::string_view::npos ? s.size() : close + 2;
            emit(RegionKind::BlockComment, i, end);
            i = end;
        } else if (c == '"' && s.compare(i, 3, R"(""")") == 0) {
            const size_t end = skip_text_block(s, i);
            emit(RegionKind::TextBlock, i, end);
            i = end;
        } else if (c == '"') {
            const size_t end = skip_quoted(s, i, '"');
            emit(RegionKind::StringLiteral, i, end);
            i = end;
        } else if (c == '\'') {
            const size_t end = skip_quoted(s, i, '\'');
            emit(RegionKind::CharLiteral, i, end);
            i = end;
        } else {
            ++i;
        }
    }
    if (code_start < s.size()) {
        out.push_back({RegionKind::Code, code_start, s.size()});
    }
    return out;
}

std::vector<CommentSpan> scan_comments(std::string_view s) {
    std::vector<CommentSpan> spans;
    size_t line = 1;
    size_t line_begin = 0; // byte offset of the current line
    size_t pos = 0;
    auto advance_to = [&](size_t target) {
        for (; pos < target; ++pos) {
            if (s[pos] == '\n') {
                ++line;
                line_begin = pos + 1;
            }
        }
    };
    for (const Region & r : lex_regions(s)) {
        if (r.kind != RegionKind::LineComment && r.kind != RegionKind::BlockComment) {
            continue;
        }
        advance_to(r.begin);
        CommentSpan span;
        span.byte_start = r.begin;
        span.byte_end = r.end;
        span.line_start = line;
        span.syntax = r.kind == RegionKind::LineComment ? CommentSyntax::Line : CommentSyntax::Block;
        const bool only_blank = std::all_of(s.begin() + static_cast<std::ptrdiff_t>(line_begin),
                                            s.begin() + static_cast<std::ptrdiff_t>(r.begin), is_blank);
        span.placement = only_blank ? Placement::Standalone : Placement::Trailing;
        span.text = std::string(s.substr(r.begin, r.end - r.begin));
        advance_to(r.end);
        span.line_end = line;
        // a block ending right after a newline still ends on the line it closed on
        if (r.end > r.begin && s[r.end - 1] == '\n') {
            span.line_end = line - 1;
        }
        spans.push_back(std::move(span));
    }
    return spans;
}

std::vector<ConceptGroup> classify_concepts(std::string_view source,
                                            const std::vector<CommentSpan> & spans) {
    for (const auto & sp : spans) {
        if (sp.byte_start >= sp.byte_end || sp.byte_end > source.size() ||
            source.substr(sp.byte_start, sp.byte_end - sp.byte_start) != sp.text) {
            throw std::invalid_argument("classify_concepts: span [" + std::to_string(sp.byte_start) +
                                        ", " + std::to_string(sp.byte_end) +
                                        ") does not originate from source");
        }
    }

    std::vector<ConceptGroup> groups;
    size_t i = 0;
    while (i < spans.size()) {
        const CommentSpan & sp = spans[i];
        if (sp.syntax == CommentSyntax::Block) {
            groups.push_back({sp.line_end > sp.line_start ? ConceptKind::Javadoc : ConceptKind::Inline, {sp}});
            ++i;
            continue;
        }
        if (sp.placement == Placement::Trailing) {
            groups.push_back({ConceptKind::Inline, {sp}});
            ++i;
            continue;
        }
        size_t j = i + 1;
        while (j < spans.size() && spans[j].syntax == CommentSyntax::Line &&
               spans[j].placement == Placement::Standalone &&
               spans[j].line_start == spans[j - 1].line_start + 1) {
            ++j;
        }
        ConceptGroup g;
        g.kind = (j - i >= 2) ? ConceptKind::Multiline : ConceptKind::Inline;
        g.spans.assign(spans.begin() + static_cast<std::ptrdiff_t>(i),
                       spans.begin() + static_cast<std::ptrdiff_t>(j));
        groups.push_back(std::move(g));
        i = j;
    }
    return groups;
}

namespace {

bool matches(ConceptKind group_kind, ConceptKind wanted) {
    return wanted == ConceptKind::Comment || group_kind == wanted;
}

} // namespace

std::string strip_concept(std::string_view source, ConceptKind kind) {
    const auto spans = scan_comments(source);
    const auto groups = classify_concepts(source, spans);

    std::vector<std::pair<size_t, size_t>> removed;
    for (const auto & g : groups) {
        if (!matches(g.kind, kind)) {
            continue;
        }
        for (const auto & sp : g.spans) {
            removed.emplace_back(sp.byte_start, sp.byte_end);
        }
    }
    if (removed.empty()) {
        return std::string(source);
    }
    std::sort(removed.begin(), removed.end());

    // Copy everything outside the removed ranges, remembering which output
    // lines had something cut out of them.
    std::string body;
    body.reserve(source.size());
    std::vector<bool> touched{false};
    size_t cursor = 0;
    auto copy_until = [&](size_t end) {
        for (; cursor < end; ++cursor) {
            body.push_back(source[cursor]);
            if (source[cursor] == '\n') {
                touched.push_back(false);
            }
        }
    };
    for (const auto & [b, e] : removed) {
        copy_until(b);
        touched.back() = true;
        cursor = e;
    }
    copy_until(source.size());

    std::string out;
    out.reserve(body.size());
    size_t line_no = 0;
    size_t start = 0;
    while (start <= body.size()) {
        size_t nl = body.find('\n', start);
        const bool has_nl = nl != std::string::npos;
        const size_t line_end = has_nl ? nl : body.size();
        if (!has_nl && start == body.size()) {
            break;
        }
        size_t content_end = line_end;
        std::string_view terminator;
        if (has_nl) {
            const bool crlf = content_end > start && body[content_end - 1] == '\r';
            if (crlf) {
                --content_end;
            }
            terminator = std::string_view(body).substr(content_end, line_end + 1 - content_end);
        }
        std::string_view content = std::string_view(body).substr(start, content_end - start);
        if (touched[line_no]) {
            while (!content.empty() && is_blank(content.back())) {
                content.remove_suffix(1);
            }
            if (!content.empty()) {
                out.append(content);
                out.append(terminator);
            }
        } else {
            out.append(content);
            out.append(terminator);
        }
        ++line_no;
        if (!has_nl) {
            break;
        }
        start = nl + 1;
    }
    return out;
}

bool contains_concept(std::string_view source, ConceptKind kind) {
    const auto spans = scan_comments(source);
    if (kind == ConceptKind::Comment) {
        return !spans.empty();
    }
    const auto groups = classify_concepts(source, spans);
    return std::any_of(groups.begin(), groups.end(),
                       [kind](const ConceptGroup & g) { return g.kind == kind; });
}

} // namespace commentcav
