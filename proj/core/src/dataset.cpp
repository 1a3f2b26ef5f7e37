// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include "mtr/dataset.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace mtr {

std::string DocumentFields::concatenated() const {
    std::string out = title;
    if (!author.empty()) {
        if (!out.empty()) out += ' ';
        out += author;
    }
    if (!body.empty()) {
        if (!out.empty()) out += ' ';
        out += body;
    }
    return out;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cols;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, '\t')) cols.push_back(cell);
    // A trailing empty column (e.g. empty body) is eaten by getline.
    if (!line.empty() && line.back() == '\t') cols.emplace_back();
    return cols;
}

void check_record(const TripletRecord& rec, long lineno) {
    if (rec.query.empty()) throw ParseError("empty query", lineno);
    if (rec.doc.empty()) throw ParseError("document has no non-empty field", lineno);
}

}  // namespace

DatasetSplit parse_dataset(const std::string& content) {
    DatasetSplit split;
    std::istringstream in(content);
    std::string line;
    long lineno = 0;
    // Which split each query string was first seen in, for disjointness.
    std::unordered_map<std::string, std::string> query_split;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cols = split_tabs(line);
        if (cols.size() != 6) {
            throw ParseError(msg("expected 6 tab-separated columns, got ", cols.size()), lineno);
        }
        TripletRecord rec;
        rec.query = cols[1];
        try {
            rec.grade = grade_from_string(cols[2]);
        } catch (const ValueError& e) {
            throw ParseError(e.what(), lineno);
        }
        rec.doc.title = cols[3];
        rec.doc.author = cols[4];
        rec.doc.body = cols[5];
        check_record(rec, lineno);

        const std::string& part = cols[0];
        auto [it, inserted] = query_split.emplace(rec.query, part);
        if (!inserted && it->second != part) {
            throw ParseError(msg("query \"", rec.query, "\" appears in both \"", it->second,
                                 "\" and \"", part, "\" splits"),
                             lineno);
        }
        if (part == "train") {
            split.train.push_back(std::move(rec));
        } else if (part == "validation") {
            split.validation.push_back(std::move(rec));
        } else if (part == "test") {
            split.test.push_back(std::move(rec));
        } else {
            throw ParseError(msg("unknown split \"", part, "\""), lineno);
        }
    }
    return split;
}

DatasetSplit load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(msg("cannot open dataset file: ", path));
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str());
}

namespace {

void serialize_part(std::string& out, const char* name, const std::vector<TripletRecord>& records) {
    for (const auto& r : records) {
        out += name;
        out += '\t';
        out += r.query;
        out += '\t';
        out += grade_name(r.grade);
        out += '\t';
        out += r.doc.title;
        out += '\t';
        out += r.doc.author;
        out += '\t';
        out += r.doc.body;
        out += '\n';
    }
}

}  // namespace

std::string serialize_dataset(const DatasetSplit& split) {
    std::string out;
    serialize_part(out, "train", split.train);
    serialize_part(out, "validation", split.validation);
    serialize_part(out, "test", split.test);
    return out;
}

void save_dataset(const std::string& path, const DatasetSplit& split) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error(msg("cannot write dataset file: ", tmp));
        out << serialize_dataset(split);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw Error(msg("cannot move ", tmp, " into place at ", path));
    }
}

void validate_dataset(const DatasetSplit& split) {
    std::unordered_set<std::string> train_q, val_q;
    for (const auto& r : split.train) {
        check_record(r, 0);
        train_q.insert(r.query);
    }
    for (const auto& r : split.validation) {
        check_record(r, 0);
        if (train_q.count(r.query)) {
            throw ValueError(msg("query \"", r.query, "\" appears in both train and validation"));
        }
        val_q.insert(r.query);
    }
    for (const auto& r : split.test) {
        check_record(r, 0);
        if (train_q.count(r.query)) {
            throw ValueError(msg("query \"", r.query, "\" appears in both train and test"));
        }
        if (val_q.count(r.query)) {
            throw ValueError(msg("query \"", r.query, "\" appears in both validation and test"));
        }
    }
}

std::uint64_t dataset_fingerprint(const DatasetSplit& split) {
    return fnv1a(serialize_dataset(split));
}

}  // namespace mtr
