// SPDX-License-Identifier: Apache-2.0
#include "countloop/prompt.hpp"

#include "countloop/error.hpp"
#include "countloop/json_extract.hpp"
#include "countloop/nouns.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

namespace countloop {

namespace {

using Tokens = std::vector<std::string>;

const std::map<std::string, int, std::less<>>& unit_words() {
    static const std::map<std::string, int, std::less<>> words{
        {"one", 1},       {"two", 2},        {"three", 3},     {"four", 4},      {"five", 5},
        {"six", 6},       {"seven", 7},      {"eight", 8},     {"nine", 9},      {"ten", 10},
        {"eleven", 11},   {"twelve", 12},    {"thirteen", 13}, {"fourteen", 14}, {"fifteen", 15},
        {"sixteen", 16},  {"seventeen", 17}, {"eighteen", 18}, {"nineteen", 19},
    };
    return words;
}

const std::map<std::string, int, std::less<>>& tens_words() {
    static const std::map<std::string, int, std::less<>> words{
        {"twenty", 20}, {"thirty", 30}, {"forty", 40},  {"fifty", 50},
        {"sixty", 60},  {"seventy", 70}, {"eighty", 80}, {"ninety", 90},
    };
    return words;
}

const std::set<std::string, std::less<>> kPrepositions{
    "in", "on", "at", "over", "with", "under", "near", "inside", "beside", "against", "above", "below",
    "behind", "of", "around", "across", "along", "onto", "into", "from", "by", "among", "between", "underneath",
    "atop", "within", "leaning", "floating", "flying", "sitting", "standing", "lying", "arranged", "scattered",
};

// Quantities the grammar refuses to turn into a number.
const std::set<std::string, std::less<>> kVague{
    "some", "several", "many", "few", "lots", "lot", "numerous", "multiple", "countless", "dozen", "dozens",
    "crowd", "group", "bunch", "pile", "herd", "flock", "number", "couple", "handful", "swarm", "pack",
    "stack", "collection", "variety", "set", "pair", "plenty", "hundreds", "thousands", "no", "zero",
};

const std::set<std::string, std::less<>> kModifiers{
    "identical", "small", "large", "big", "tiny", "little", "huge", "red", "blue", "green", "yellow",
    "white", "black", "brown", "gray", "grey", "pink", "purple", "colorful", "colourful", "various",
    "different", "wooden", "shiny", "fresh", "ripe", "cute", "fluffy", "cartoon", "realistic", "distinct",
    "old", "new", "golden", "silver", "tall", "short", "round", "empty", "full",
};

bool is_separator(const std::string& t) { return t == "and" || t == ","; }

Tokens tokenize(std::string_view text) {
    Tokens out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty())
            out.push_back(std::move(cur));
        cur.clear();
    };
    for (char raw : text) {
        auto c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            flush();
        } else if (raw == ',' || raw == ';') {
            flush();
            out.emplace_back(",");
        } else if (raw == '.' || raw == '!' || raw == '?' || raw == '"' || raw == '(' || raw == ')') {
            flush();
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

// Parses "twenty-one", "twenty one", "seven", "nineteen" at tokens[i].
std::optional<std::pair<int, std::size_t>> below_hundred(const Tokens& t, std::size_t i) {
    if (i >= t.size())
        return std::nullopt;
    const auto& w = t[i];
    if (auto it = unit_words().find(w); it != unit_words().end())
        return std::pair{it->second, i + 1};
    if (auto dash = w.find('-'); dash != std::string::npos) {
        auto tens = tens_words().find(std::string_view(w).substr(0, dash));
        auto unit = unit_words().find(std::string_view(w).substr(dash + 1));
        if (tens != tens_words().end() && unit != unit_words().end() && unit->second < 10)
            return std::pair{tens->second + unit->second, i + 1};
        return std::nullopt;
    }
    if (auto it = tens_words().find(w); it != tens_words().end()) {
        if (i + 1 < t.size()) {
            auto unit = unit_words().find(t[i + 1]);
            if (unit != unit_words().end() && unit->second < 10)
                return std::pair{it->second + unit->second, i + 2};
        }
        return std::pair{it->second, i + 1};
    }
    return std::nullopt;
}

bool all_digits(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

// A count at tokens[i]: digits, number words, or an article. Returns value and
// the index of the first token after the count.
std::optional<std::pair<int, std::size_t>> parse_count(const Tokens& t, std::size_t i) {
    if (i >= t.size())
        return std::nullopt;
    const auto& w = t[i];
    if (all_digits(w)) {
        if (w.size() > 6)
            return std::nullopt;
        return std::pair{std::stoi(w), i + 1};
    }
    int hundreds = 0;
    std::size_t next = i;
    if ((w == "a" || w == "an" || w == "one") && i + 1 < t.size() && t[i + 1] == "hundred") {
        hundreds = 1;
        next = i + 2;
    } else if (auto lead = below_hundred(t, i)) {
        if (lead->second < t.size() && t[lead->second] == "hundred" && lead->first < 10) {
            hundreds = lead->first;
            next = lead->second + 1;
        } else {
            return lead;
        }
    } else if (w == "hundred") {
        hundreds = 1;
        next = i + 1;
    } else if (w == "a" || w == "an") {
        return std::pair{1, i + 1};
    } else {
        return std::nullopt;
    }
    int value = hundreds * 100;
    std::size_t rest = next;
    if (rest < t.size() && t[rest] == "and")
        ++rest;
    if (auto tail = below_hundred(t, rest))
        return std::pair{value + tail->first, tail->second};
    return std::pair{value, next};
}

std::string join(const Tokens& t, std::size_t from, std::size_t to) {
    std::string out;
    for (std::size_t i = from; i < to; ++i) {
        if (t[i] == ",")
            continue;
        if (!out.empty())
            out += ' ';
        out += t[i];
    }
    return out;
}

// Leading "a photo of", "a scene with", "there are" and similar frames.
std::size_t skip_frame(const Tokens& t) {
    if (t.size() >= 2 && t[0] == "there" && (t[1] == "are" || t[1] == "is"))
        return 2;
    for (std::size_t k = 0; k + 2 < t.size() && k < 4; ++k) {
        if ((t[k + 1] == "of" || t[k + 1] == "with" || t[k + 1] == "showing" || t[k + 1] == "containing") &&
            (t[0] == "a" || t[0] == "an" || t[0] == "the") && k >= 1) {
            if (parse_count(t, k + 2))
                return k + 2;
        }
    }
    return 0;
}

// True when a count starts at i and is followed by a noun word.
bool clause_starts_at(const Tokens& t, std::size_t i) {
    auto c = parse_count(t, i);
    return c && c->second < t.size() && !is_separator(t[c->second]) && !kPrepositions.count(t[c->second]);
}

} // namespace

std::optional<int> parse_number_words(std::string_view text) {
    auto t = tokenize(text);
    auto c = parse_count(t, 0);
    if (!c || c->second != t.size())
        return std::nullopt;
    return c->first;
}

int PromptSpec::total() const {
    int sum = 0;
    for (const auto& [_, n] : targets)
        sum += n;
    return sum;
}

PromptSpec parse_prompt(std::string_view text) {
    PromptSpec spec;
    spec.raw = std::string(text);
    auto t = tokenize(text);
    if (t.empty())
        throw ParseError("empty prompt");

    std::size_t i = skip_frame(t);
    bool any = false;
    while (i < t.size()) {
        auto count = parse_count(t, i);
        if (!count) {
            if (kVague.count(t[i]))
                throw ParseError("vague quantity '" + t[i] + "' cannot be grounded to a count");
            if (!any)
                throw ParseError("no countable noun clause in prompt");
            throw ParseError("clause without a count near '" + t[i] + "'");
        }
        auto [n, j] = *count;
        if (j < t.size() && kVague.count(t[j]))
            throw ParseError("vague quantity '" + t[j] + "' cannot be grounded to a count");

        std::size_t noun_begin = j;
        while (j < t.size() && !is_separator(t[j]) && !kPrepositions.count(t[j]))
            ++j;
        if (j == noun_begin)
            throw ParseError("count without a noun");

        std::vector<std::string> modifiers;
        std::size_t head_begin = noun_begin;
        while (head_begin + 1 < j && kModifiers.count(t[head_begin]))
            modifiers.push_back(t[head_begin++]);
        auto category = singularize(join(t, head_begin, j));
        if (kVague.count(t[j - 1]))
            throw ParseError("vague quantity '" + t[j - 1] + "' cannot be grounded to a count");
        if (n < 1)
            throw ParseError("counts must be at least one");

        spec.targets[category] += n;
        auto& attrs = spec.attributes[category];
        for (auto& m : modifiers)
            if (std::find(attrs.begin(), attrs.end(), m) == attrs.end())
                attrs.push_back(m);
        any = true;

        if (j < t.size() && kPrepositions.count(t[j])) {
            std::size_t phrase_begin = j;
            while (j < t.size() && !(is_separator(t[j]) && [&] {
                       std::size_t k = j;
                       while (k < t.size() && is_separator(t[k]))
                           ++k;
                       return clause_starts_at(t, k);
                   }()))
                ++j;
            auto phrase = join(t, phrase_begin, j);
            if (std::find(attrs.begin(), attrs.end(), phrase) == attrs.end())
                attrs.push_back(phrase);
            if (j == t.size())
                spec.context = phrase;
        }
        while (j < t.size() && is_separator(t[j]))
            ++j;
        i = j;
    }
    for (auto it = spec.attributes.begin(); it != spec.attributes.end();)
        it = it->second.empty() ? spec.attributes.erase(it) : std::next(it);
    return spec;
}

void to_json(nlohmann::json& j, const PromptSpec& spec) {
    j = nlohmann::json{{"targets", spec.targets}, {"attributes", spec.attributes}};
    j["context"] = spec.context ? nlohmann::json(*spec.context) : nlohmann::json(nullptr);
    if (!spec.raw.empty())
        j["raw"] = spec.raw;
}

void from_json(const nlohmann::json& j, PromptSpec& spec) {
    spec = PromptSpec{};
    if (!j.is_object() || !j.contains("targets") || !j["targets"].is_object())
        throw SchemaError("prompt spec requires a \"targets\" object");
    for (const auto& [name, value] : j["targets"].items()) {
        if (!value.is_number_integer() || value.get<int>() < 1)
            throw SchemaError("target count for '" + name + "' must be a positive integer");
        auto category = singularize(name);
        if (category.empty())
            throw SchemaError("empty category name");
        spec.targets[category] += value.get<int>();
    }
    if (spec.targets.empty())
        throw SchemaError("prompt spec has no targets");
    if (auto it = j.find("attributes"); it != j.end() && it->is_object())
        for (const auto& [name, list] : it->items())
            if (list.is_array())
                for (const auto& a : list)
                    if (a.is_string())
                        spec.attributes[singularize(name)].push_back(a.get<std::string>());
    if (auto it = j.find("context"); it != j.end() && it->is_string())
        spec.context = it->get<std::string>();
    if (auto it = j.find("raw"); it != j.end() && it->is_string())
        spec.raw = it->get<std::string>();
}

namespace {

PromptSpec spec_from_objects(const nlohmann::json& j) {
    const auto& objects = j["objects"];
    if (!objects.is_array() || objects.empty())
        throw SchemaError("\"objects\" must be a non-empty array");
    PromptSpec spec;
    for (const auto& o : objects) {
        if (!o.is_object())
            throw SchemaError("object entries must be JSON objects");
        std::string category;
        if (auto c = o.find("category"); c != o.end() && c->is_string()) {
            category = c->get<std::string>();
        } else if (auto id = o.find("id"); id != o.end() && id->is_string()) {
            category = id->get<std::string>();
            auto cut = category.find_last_of(" _");
            if (cut != std::string::npos && cut + 1 < category.size() &&
                std::all_of(category.begin() + static_cast<long>(cut) + 1, category.end(),
                            [](unsigned char ch) { return std::isdigit(ch); }))
                category.resize(cut);
        } else {
            throw SchemaError("object entry needs a \"category\" or \"id\"");
        }
        category = singularize(trim(category));
        if (category.empty())
            throw SchemaError("empty category name");
        spec.targets[category] += 1;
        if (auto a = o.find("attributes"); a != o.end() && a->is_array())
            for (const auto& attr : *a)
                if (attr.is_string()) {
                    auto& list = spec.attributes[category];
                    if (std::find(list.begin(), list.end(), attr.get<std::string>()) == list.end())
                        list.push_back(attr.get<std::string>());
                }
    }
    if (auto c = j.find("context"); c != j.end() && c->is_string())
        spec.context = c->get<std::string>();
    return spec;
}

} // namespace

PromptSpec parse_llm_json(std::string_view text) {
    PromptSpec result;
    first_schema_valid(text, [&](const nlohmann::json& j) {
        if (j.contains("targets"))
            result = j.get<PromptSpec>();
        else if (j.contains("objects"))
            result = spec_from_objects(j);
        else
            throw SchemaError("reply lacks \"targets\" or \"objects\"");
    });
    return result;
}

} // namespace countloop
