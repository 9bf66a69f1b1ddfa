// SPDX-License-Identifier: Apache-2.0
#include "countloop/nouns.hpp"

#include "countloop/embedded_data.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace countloop {

namespace data {

std::vector<std::string_view> lines(std::string_view table) {
    std::vector<std::string_view> out;
    while (!table.empty()) {
        auto nl = table.find('\n');
        auto line = table.substr(0, nl);
        table = nl == std::string_view::npos ? std::string_view{} : table.substr(nl + 1);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front())))
            line.remove_prefix(1);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
            line.remove_suffix(1);
        if (line.empty() || line.front() == '#')
            continue;
        out.push_back(line);
    }
    return out;
}

} // namespace data

namespace {

struct IrregularTable {
    std::map<std::string, std::string, std::less<>> to_singular;
    std::map<std::string, std::string, std::less<>> to_plural;

    IrregularTable() {
        for (auto line : data::lines(data::irregular_plurals())) {
            std::istringstream in{std::string(line)};
            std::string plural, singular;
            in >> plural >> singular;
            to_singular.emplace(plural, singular);
            to_plural.emplace(singular, plural);
        }
    }
};

const IrregularTable& irregulars() {
    static const IrregularTable table;
    return table;
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::pair<std::string, std::string> split_last_word(std::string_view phrase) {
    auto t = trim(phrase);
    auto sp = t.find_last_of(' ');
    if (sp == std::string::npos)
        return {"", t};
    return {t.substr(0, sp + 1), t.substr(sp + 1)};
}

std::string singular_word(const std::string& w) {
    const auto& table = irregulars();
    if (auto it = table.to_singular.find(w); it != table.to_singular.end())
        return it->second;
    if (table.to_plural.count(w))
        return w;  // already singular (sheep, fish, person)
    if (w.size() > 3 && ends_with(w, "ies"))
        return w.substr(0, w.size() - 3) + "y";
    for (std::string_view suf : {"ches", "shes", "sses", "xes", "zzes"})
        if (ends_with(w, suf))
            return w.substr(0, w.size() - 2);
    if (w.size() > 1 && ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is"))
        return w.substr(0, w.size() - 1);
    return w;
}

std::string plural_word(const std::string& w) {
    const auto& table = irregulars();
    if (auto it = table.to_plural.find(w); it != table.to_plural.end())
        return it->second;
    if (w.size() > 1 && ends_with(w, "y") && std::string_view("aeiou").find(w[w.size() - 2]) == std::string_view::npos)
        return w.substr(0, w.size() - 1) + "ies";
    for (std::string_view suf : {"ch", "sh", "ss", "x", "zz", "s"})
        if (ends_with(w, suf))
            return w + "es";
    return w + "s";
}

} // namespace

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string singularize(std::string_view phrase) {
    auto [head, last] = split_last_word(to_lower(phrase));
    return head + singular_word(last);
}

std::string pluralize(std::string_view phrase) {
    auto [head, last] = split_last_word(to_lower(phrase));
    return head + plural_word(last);
}

} // namespace countloop
