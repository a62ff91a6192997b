// ragforge: staged retrieval-evaluation pipeline over one workspace.
//
//   ragforge run <stage> --config cfg.json [--workspace dir]
//   ragforge retrieve --config <cell|all> --k 10 --queries queries.jsonl --workspace dir
//   ragforge report <workspace>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <ragforge/http_providers.hpp>
#include <ragforge/ragforge.hpp>

namespace fs = std::filesystem;
using namespace ragforge;

namespace {

PipelineConfig load_config(const std::string& config_path, const std::string& workspace_override) {
    PipelineConfig cfg = PipelineConfig::load(config_path);
    if (!workspace_override.empty())
        cfg.workspace_dir = workspace_override;
    return cfg;
}

PipelineConfig load_snapshot(const fs::path& workspace) {
    const fs::path snapshot = workspace / "config.snapshot.json";
    if (!fs::exists(snapshot))
        throw Error("no config snapshot in " + workspace.string() +
                    "; run 'ragforge run <stage> --config ...' against this workspace first");
    PipelineConfig cfg = PipelineConfig::from_json(json::parse(read_file(snapshot)));
    cfg.workspace_dir = workspace.string();
    return cfg;
}

int cmd_run(const std::string& stage_name, const std::string& config_path,
            const std::string& workspace_override) {
    const Stage stage = stage_from(stage_name);
    PipelineConfig cfg = load_config(config_path, workspace_override);
    Providers providers = make_providers(cfg);
    Pipeline pipeline(std::move(cfg), std::move(providers), &std::cout);
    pipeline.run(stage);
    return 0;
}

int cmd_retrieve(const std::string& cell, std::size_t k, const std::string& queries_path,
                 const std::string& workspace, const std::string& out_path) {
    PipelineConfig cfg = load_snapshot(workspace);
    const Providers providers = make_providers(cfg);
    const fs::path ws(workspace);

    std::vector<std::pair<ChunkingStrategy, EmbeddingStrategy>> cells;
    if (cell == "all") {
        for (auto c : kChunkingStrategies)
            for (auto e : kEmbeddingStrategies)
                cells.emplace_back(c, e);
    } else {
        const auto colon = cell.find(':');
        if (colon == std::string::npos)
            throw Error("cell must be '<chunking>:<embedding>' or 'all', got '" + cell + "'");
        cells.emplace_back(chunking_strategy_from(cell.substr(0, colon)),
                           embedding_strategy_from(cell.substr(colon + 1)));
    }

    std::vector<QueryRecord> queries;
    for_each_jsonl(queries_path, [&](std::size_t, const json& record) {
        queries.push_back(query_from_json(record));
    });
    for (auto& q : queries)
        if (!q.detected_intent)
            q.detected_intent = detect_intent(q.text);

    std::optional<JsonlWriter> file_out;
    if (!out_path.empty())
        file_out.emplace(out_path);

    for (const auto& [chunking, embedding] : cells) {
        const fs::path index_file =
            ws / ("index-" + std::string(to_string(chunking)) + "-" +
                  std::string(to_string(embedding)) + ".rfi");
        if (!fs::exists(index_file))
            throw Error("embed artifacts missing (" + index_file.filename().string() +
                        " not found); run 'ragforge run embed' first");
        const VectorIndex index = VectorIndex::load(index_file);
        const TfidfModel model = load_tfidf_model(
            ws / ("tfidf-" + std::string(to_string(chunking)) + ".json"));
        RetrieverConfig config{chunking, embedding, k, cfg.fusion_weights};
        for (const auto& query : queries) {
            const auto qv = embed_query(query, config, *providers.embedding, &model);
            const auto hits = index.search(qv.values, k);
            RetrievalResult r;
            r.query_id = query.query_id;
            r.chunking = chunking;
            r.embedding = embedding;
            for (std::size_t i = 0; i < hits.size(); ++i)
                r.hits.push_back(RankedHit{hits[i].chunk_id, hits[i].score, i + 1});
            const json line = retrieval_result_to_json(r);
            if (file_out)
                file_out->write(line);
            else
                std::cout << line.dump() << '\n';
        }
    }
    return 0;
}

int cmd_report(const std::string& workspace) {
    const fs::path ws(workspace);
    const fs::path report_path = ws / "report.json";
    if (!fs::exists(report_path))
        throw Error("evaluate artifacts missing (report.json not found); run 'ragforge run "
                    "evaluate' first");
    const json report = json::parse(read_file(report_path));
    validate_report_json(report);
    std::cout << Pipeline::render_report_text(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"metadata-enriched retrieval pipeline"};
    app.require_subcommand(1);

    std::string stage, config_path, workspace, cell = "all", queries_path, out_path;
    std::size_t k = 10;

    auto* run = app.add_subcommand("run", "run one pipeline stage (or 'all')");
    run->add_option("stage", stage, "ingest|chunk|enrich|embed|index|retrieve|groundtruth|evaluate|all")
        ->required();
    run->add_option("--config", config_path, "pipeline config JSON")->required();
    run->add_option("--workspace", workspace, "override the workspace directory");

    auto* retrieve = app.add_subcommand("retrieve", "query stored indexes directly");
    retrieve->add_option("--config", cell, "retriever cell '<chunking>:<embedding>' or 'all'");
    retrieve->add_option("--k", k, "results per query");
    retrieve->add_option("--queries", queries_path, "queries JSONL ({query_id, text})")
        ->required();
    retrieve->add_option("--workspace", workspace, "workspace with built indexes")->required();
    retrieve->add_option("--out", out_path, "write results JSONL here instead of stdout");

    auto* report = app.add_subcommand("report", "render metric tables from a workspace");
    report->add_option("workspace", workspace, "workspace directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(stage, config_path, workspace);
        if (retrieve->parsed())
            return cmd_retrieve(cell, k, queries_path, workspace, out_path);
        if (report->parsed())
            return cmd_report(workspace);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
