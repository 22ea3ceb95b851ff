#include "dtcal/parser.hpp"

#include <cctype>
#include <charconv>
#include <set>

namespace dtcal {

namespace {

enum class Tok { Name, Nat, Sym, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    SourceSpan span;
};

const std::set<std::string, std::less<>> kKeywords = {"nil", "stop", "scope", "in",  "out",
                                                      "get", "put",  "acc",   "new", "kill",
                                                      "exit", "dl",  "inf"};

struct SyntaxError {
    std::string message;
    SourceSpan span;
};

class Lexer {
public:
    Lexer(std::string_view text, std::string file) : text_(text), file_(std::move(file)) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        for (;;) {
            skipSpaceAndComments();
            Token tok;
            tok.span = {file_, line_, column_, 0};
            if (pos_ >= text_.size()) {
                tok.kind = Tok::End;
                out.push_back(tok);
                return out;
            }
            char c = text_[pos_];
            std::size_t start = pos_;
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                while (pos_ < text_.size() &&
                       (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
                    advance();
                tok.kind = Tok::Name;
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
                    advance();
                tok.kind = Tok::Nat;
            } else if (c == ':' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '=') {
                advance();
                advance();
                tok.kind = Tok::Sym;
            } else if (std::string_view("+|.\\()[],!?@#^-;").find(c) != std::string_view::npos) {
                advance();
                tok.kind = Tok::Sym;
            } else {
                tok.span.length = 1;
                throw SyntaxError{"unexpected character '" + std::string(1, c) + "'", tok.span};
            }
            tok.text = std::string(text_.substr(start, pos_ - start));
            tok.span.length = static_cast<std::uint32_t>(pos_ - start);
            out.push_back(std::move(tok));
        }
    }

private:
    void advance() {
        if (text_[pos_] == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        ++pos_;
    }

    void skipSpaceAndComments() {
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '/') {
                while (pos_ < text_.size() && text_[pos_] != '\n')
                    advance();
            } else {
                return;
            }
        }
    }

    std::string_view text_;
    std::string file_;
    std::size_t pos_ = 0;
    std::uint32_t line_ = 1;
    std::uint32_t column_ = 1;
};

class Parser {
public:
    explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

    SpecFile parseSpec(Diagnostics &diags) {
        SpecFile spec;
        while (peek().kind != Tok::End) {
            Token name = expectName("definition name");
            expectSym(":=");
            TermPtr body = parseTerm();
            expectSym(";");
            if (spec.find(name.text)) {
                diags.push_back(
                    {Severity::Error, "duplicate definition '" + name.text + "'", name.span});
                continue;
            }
            spec.definitions.push_back({name.text, body, name.span});
        }
        if (!spec.definitions.empty())
            spec.root = spec.definitions.front().name;
        return spec;
    }

private:
    // A parsed `basic` and whether it came from a bare action production
    // (temporal/period suffixes then attach to the action itself).
    struct Basic {
        TermPtr term;
        bool bareAction = false;
    };

    const Token &peek(std::size_t ahead = 0) const {
        std::size_t i = std::min(pos_ + ahead, toks_.size() - 1);
        return toks_[i];
    }
    Token take() {
        Token t = peek();
        if (pos_ < toks_.size() - 1)
            ++pos_;
        return t;
    }
    bool isSym(std::string_view s, std::size_t ahead = 0) const {
        return peek(ahead).kind == Tok::Sym && peek(ahead).text == s;
    }
    bool isKeyword(std::string_view s, std::size_t ahead = 0) const {
        return peek(ahead).kind == Tok::Name && peek(ahead).text == s;
    }
    bool acceptSym(std::string_view s) {
        if (!isSym(s))
            return false;
        take();
        return true;
    }

    [[noreturn]] void fail(const std::string &expected) const {
        const Token &t = peek();
        std::string found = t.kind == Tok::End ? "end of input" : "'" + t.text + "'";
        throw SyntaxError{"expected " + expected + ", found " + found, t.span};
    }

    void expectSym(std::string_view s) {
        if (!acceptSym(s))
            fail("'" + std::string(s) + "'");
    }

    Token expectName(const std::string &what) {
        if (peek().kind != Tok::Name || kKeywords.count(peek().text) || peek().text == "_")
            fail(what);
        return take();
    }

    Ticks expectNat() {
        if (peek().kind != Tok::Nat)
            fail("a natural number");
        Token t = take();
        Ticks value = 0;
        auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), value);
        if (ec != std::errc{})
            throw SyntaxError{"number out of range", t.span};
        return value;
    }

    Bound parseTv() {
        if (acceptSym("-"))
            return std::nullopt;
        return expectNat();
    }

    TermPtr parseTerm() { return parseChoice(); }

    TermPtr parseChoice() {
        TermPtr left = parsePar();
        while (acceptSym("+"))
            left = mk::choice(left, parsePar());
        return left;
    }

    TermPtr parsePar() {
        TermPtr left = parseSeq();
        while (acceptSym("|"))
            left = mk::par(left, parseSeq());
        return left;
    }

    TermPtr parseSeq() {
        std::vector<TermPtr> parts{parseUnary()};
        while (acceptSym("."))
            parts.push_back(parseUnary());
        TermPtr result = parts.back();
        for (std::size_t i = parts.size() - 1; i-- > 0;)
            result = mk::seq(parts[i], result);
        return result;
    }

    TermPtr parseUnary() {
        Basic b = parseBasic();
        TermPtr t = b.term;
        std::optional<TemporalSpec> temporal;
        std::optional<PeriodSpec> period;
        if (isSym("[")) {
            take();
            TemporalSpec spec;
            Bound r = parseTv();
            expectSym(",");
            spec.timeout = parseTv();
            expectSym(",");
            Bound e = parseTv();
            expectSym(",");
            spec.deadline = parseTv();
            expectSym("]");
            // ready and exec have no unbounded form; '-' falls back to the defaults.
            spec.ready = r.value_or(0);
            spec.exec = e.value_or(1);
            temporal = spec;
        }
        if (isSym("^")) {
            take();
            expectSym("(");
            PeriodSpec p;
            p.period = expectNat();
            expectSym(",");
            if (isKeyword("inf"))
                take();
            else
                p.reps = expectNat();
            expectSym(")");
            period = p;
        }
        if (b.bareAction && (temporal || period)) {
            const auto &a = *t->as<term::Act>();
            t = mk::act(a.action, temporal, period);
        } else {
            if (temporal)
                t = mk::timed(t, *temporal, false);
            if (period)
                t = mk::repeat(t, *period);
        }
        if (acceptSym("\\"))
            t = mk::exception(t, parseBasic().term);
        return t;
    }

    std::optional<MoveKind> moveKind(std::size_t ahead = 0) const {
        if (peek(ahead).kind != Tok::Name)
            return std::nullopt;
        const std::string &s = peek(ahead).text;
        if (s == "in")
            return MoveKind::In;
        if (s == "out")
            return MoveKind::Out;
        if (s == "get")
            return MoveKind::Get;
        if (s == "put")
            return MoveKind::Put;
        return std::nullopt;
    }

    Basic parseBasic() {
        const Token &t = peek();
        if (isSym("(")) {
            take();
            TermPtr inner = parseTerm();
            expectSym(")");
            return {inner, false};
        }
        if (isSym("@")) {
            take();
            Priority level{expectNat()};
            return {mk::priority(level, parseBasic().term), false};
        }
        if (t.kind != Tok::Name)
            fail("a process term");

        if (t.text == "stop") {
            take();
            return {mk::stop(), false};
        }
        if (t.text == "scope") {
            take();
            Token ch = expectName("channel name");
            if (!isKeyword("in"))
                fail("'in'");
            take();
            return {mk::scope(ch.text, parseBasic().term), false};
        }
        if (t.text == "dl") {
            take();
            expectSym("(");
            Ticks d = expectNat();
            expectSym(")");
            return {mk::dl(parseBasic().term, d), false};
        }
        if (t.text == "nil") {
            take();
            act::Empty e;
            if (acceptSym("(")) {
                e.exec = expectNat();
                expectSym(")");
            }
            return {mk::act(e), true};
        }
        if (auto kind = moveKind()) {
            take();
            act::MoveRequest req;
            req.kind = *kind;
            if (acceptSym("@"))
                req.prio = Priority{expectNat()};
            if (acceptSym("#"))
                req.key = expectName("key name").text;
            req.target = expectName("movement target").text;
            return {mk::act(req), true};
        }
        if (t.text == "acc") {
            take();
            auto kind = moveKind();
            if (!kind)
                fail("a movement kind (in, out, get, put)");
            take();
            act::MovePermit perm;
            perm.kind = *kind;
            if (acceptSym("#"))
                perm.key = expectName("key name").text;
            perm.subject = expectName("permitted process").text;
            return {mk::act(perm), true};
        }
        if (t.text == "new") {
            take();
            return {mk::act(act::New{expectName("process name").text}), true};
        }
        if (t.text == "kill") {
            take();
            return {mk::act(act::Kill{expectName("process name").text}), true};
        }
        if (t.text == "exit") {
            take();
            return {mk::act(act::Exit{}), true};
        }

        Token name = expectName("a process term");
        if (isSym("!")) {
            take();
            expectSym("(");
            std::string msg = expectName("message name").text;
            expectSym(")");
            return {mk::act(act::Send{name.text, msg}), true};
        }
        if (isSym("?")) {
            take();
            expectSym("(");
            std::string pattern;
            if (peek().kind == Tok::Name && peek().text == "_")
                pattern = take().text;
            else
                pattern = expectName("message pattern").text;
            expectSym(")");
            return {mk::act(act::Receive{name.text, pattern}), true};
        }
        if (isSym("[")) {
            take();
            TermPtr children;
            if (!isSym("]"))
                children = parseTerm();
            expectSym("]");
            return {mk::nest(name.text, children), false};
        }
        return {mk::ref(name.text), false};
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

} // namespace

ParseResult parse(std::string_view text, std::string file) {
    ParseResult result;
    try {
        auto tokens = Lexer(text, file).run();
        Parser parser(std::move(tokens));
        SpecFile spec = parser.parseSpec(result.diagnostics);
        result.spec = std::move(spec);
    } catch (const SyntaxError &e) {
        result.diagnostics.push_back({Severity::Error, e.message, e.span});
    }
    return result;
}

} // namespace dtcal
