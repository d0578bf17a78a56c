#include "latent_probe/transfer.hpp"

#include <fstream>

#include "latent_probe/correlation.hpp"
#include "latent_probe/csv.hpp"

namespace latent_probe {

namespace {

const EmbeddingMatrix& embeddings_for(const std::map<std::string, EmbeddingMatrix>& embeddings,
                                      const std::string& variable) {
  auto it = embeddings.find(variable);
  if (it == embeddings.end())
    throw Error("missing completion-prompt embeddings for variable '" + variable + "'");
  return it->second;
}

struct LabelledRows {
  std::vector<std::size_t> rows;  // dataset rows
  std::vector<double> labels;     // transformed then standardized
};

LabelledRows standardized_labels(const VariableSpec& spec,
                                 std::span<const std::optional<double>> raw, bool range_filter) {
  LabelledRows out;
  std::vector<double> transformed;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!raw[i] || !transformable(spec.transform, *raw[i])) continue;
    if (range_filter && !within_bounds(spec, *raw[i])) continue;
    out.rows.push_back(i);
    transformed.push_back(apply_transform(spec, *raw[i]));
  }
  if (out.rows.size() < 2)
    throw Error("variable '" + spec.name + "' has fewer than 2 usable labels");
  const Standardizer s = Standardizer::fit(transformed);
  out.labels.reserve(transformed.size());
  for (double v : transformed) out.labels.push_back(s.apply(v));
  return out;
}

void append(PooledTrainingSet& pool, const Dataset& ds, const EmbeddingMatrix& emb,
            const LabelledRows& labelled, const std::string& variable, LabelSource source,
            std::vector<Vector>& row_buffer) {
  const auto perm = align(ds, emb);
  for (std::size_t i = 0; i < labelled.rows.size(); ++i) {
    const std::size_t r = labelled.rows[i];
    row_buffer.push_back(emb.data.row(static_cast<Eigen::Index>(perm[r])).cast<double>().transpose());
    pool.provenance.push_back({variable, ds.entity_ids[r], source});
  }
}

PooledTrainingSet finalize(PooledTrainingSet pool, const std::vector<Vector>& rows,
                           const std::vector<double>& labels) {
  if (rows.empty()) throw Error("transfer pool is empty");
  const Eigen::Index d = rows.front().size();
  pool.X.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) throw Error("transfer pool: embedding dimensions differ across variables");
    pool.X.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  pool.y = Eigen::Map<const Vector>(labels.data(), static_cast<Eigen::Index>(labels.size()));
  return pool;
}

Vector predict_with(const TransferSettings& settings, const PooledTrainingSet& pool, const Matrix& X) {
  if (settings.model == TransferModelKind::ridge)
    return train_transfer_linear(pool, settings.lambda_grid).predict(X);
  return mlp_predict(train_transfer(pool, settings.train, settings.dropout), X);
}

}  // namespace

std::string_view to_string(PoolMode m) {
  return m == PoolMode::exclude_target ? "exclude_target" : "noisy_target";
}

PoolMode parse_pool_mode(std::string_view s) {
  if (s == "exclude_target") return PoolMode::exclude_target;
  if (s == "noisy_target") return PoolMode::noisy_target;
  throw Error("unknown transfer mode '" + std::string(s) + "'");
}

std::string_view to_string(TransferModelKind k) { return k == TransferModelKind::mlp ? "mlp" : "ridge"; }

TransferModelKind parse_transfer_model(std::string_view s) {
  if (s == "mlp") return TransferModelKind::mlp;
  if (s == "ridge") return TransferModelKind::ridge;
  throw Error("unknown transfer model '" + std::string(s) + "'");
}

PooledTrainingSet build_pooled(const Dataset& ds,
                               const std::map<std::string, EmbeddingMatrix>& embeddings,
                               const std::string& target, PoolMode mode, const TextEstimates* text) {
  ds.column_index(target);  // throws on unknown target
  if (mode == PoolMode::noisy_target && !text)
    throw Error("noisy_target transfer needs text estimates for '" + target + "'");

  PooledTrainingSet pool;
  std::vector<Vector> rows;
  std::vector<double> labels;
  for (const auto& col : ds.columns) {
    if (col.spec.name == target) continue;
    const EmbeddingMatrix& emb = embeddings_for(embeddings, col.spec.name);
    const LabelledRows lr = standardized_labels(col.spec, col.values, false);
    append(pool, ds, emb, lr, col.spec.name, LabelSource::ground_truth, rows);
    labels.insert(labels.end(), lr.labels.begin(), lr.labels.end());
  }
  if (mode == PoolMode::noisy_target) {
    const VariableSpec& spec = ds.column(target).spec;
    const auto aligned = text->aligned_to(ds);
    const LabelledRows lr = standardized_labels(spec, aligned, true);
    append(pool, ds, embeddings_for(embeddings, target), lr, target, LabelSource::text, rows);
    labels.insert(labels.end(), lr.labels.begin(), lr.labels.end());
  }
  return finalize(std::move(pool), rows, labels);
}

TransferTestSet build_transfer_test(const Dataset& ds,
                                    const std::map<std::string, EmbeddingMatrix>& embeddings,
                                    const std::string& target, const TextEstimates* text) {
  const VariableColumn& col = ds.column(target);
  const EmbeddingMatrix& emb = embeddings_for(embeddings, target);
  const auto perm = align(ds, emb);
  std::vector<std::optional<double>> t;
  if (text) t = text->aligned_to(ds);
  TransferTestSet test;
  std::vector<std::size_t> emb_rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!col.values[i]) continue;
    std::optional<double> tv;
    if (text) {
      if (!t[i] || !within_bounds(col.spec, *t[i]) || !transformable(col.spec.transform, *t[i])) continue;
      tv = apply_transform(col.spec, *t[i]);
    }
    test.entity_ids.push_back(ds.entity_ids[i]);
    test.truth.push_back(apply_transform(col.spec, *col.values[i]));
    test.text.push_back(tv);
    emb_rows.push_back(perm[i]);
  }
  test.X = emb.gather(emb_rows);
  return test;
}

MlpModel train_transfer(const PooledTrainingSet& pool, const TrainConfig& cfg, double dropout) {
  if (pool.size() == 0) throw Error("transfer pool is empty");
  return mlp_train(pool.X, pool.y, cfg, dropout);
}

RidgeModel train_transfer_linear(const PooledTrainingSet& pool, std::span<const double> lambda_grid) {
  if (pool.size() == 0) throw Error("transfer pool is empty");
  return ridge_fit_auto(pool.X, pool.y, lambda_grid);
}

TransferOutcome run_transfer(const Dataset& ds,
                             const std::map<std::string, EmbeddingMatrix>& embeddings,
                             const std::string& target, PoolMode mode, const TextEstimates* text,
                             const TransferSettings& settings) {
  const PooledTrainingSet pool = build_pooled(ds, embeddings, target, mode, text);
  for (const auto& p : pool.provenance)
    if (p.variable == target && p.source == LabelSource::ground_truth)
      throw Error("internal: target ground truth leaked into the transfer pool");
  const TransferTestSet test = build_transfer_test(ds, embeddings, target, text);

  TransferOutcome out;
  out.variable = target;
  out.mode = mode;
  out.n_train = pool.size();
  out.n_test = test.truth.size();
  const Vector pred = predict_with(settings, pool, test.X);
  out.predictions.assign(pred.data(), pred.data() + pred.size());
  out.spearman_transfer = spearman(out.predictions, test.truth);
  if (text) {
    std::vector<double> tv;
    for (const auto& v : test.text) tv.push_back(*v);
    out.spearman_text = try_spearman(tv, test.truth);
  }
  return out;
}

std::vector<double> cross_dataset_transfer(std::span<const TransferSource> train_sets,
                                           const TransferSource& test,
                                           const TransferSettings& settings) {
  if (train_sets.empty()) throw Error("cross-dataset transfer needs at least one training dataset");
  PooledTrainingSet pool;
  std::vector<Vector> rows;
  std::vector<double> labels;
  for (const auto& src : train_sets) {
    const VariableColumn& col = src.dataset.column(src.variable);
    const LabelledRows lr = standardized_labels(col.spec, col.values, false);
    append(pool, src.dataset, src.embeddings, lr, src.variable, LabelSource::ground_truth, rows);
    labels.insert(labels.end(), lr.labels.begin(), lr.labels.end());
  }
  pool = finalize(std::move(pool), rows, labels);
  const auto perm = align(test.dataset, test.embeddings);
  const Matrix X = test.embeddings.gather(perm);
  if (X.cols() != pool.X.cols()) throw Error("cross-dataset transfer: embedding dimension mismatch");
  const Vector pred = predict_with(settings, pool, X);
  return {pred.data(), pred.data() + pred.size()};
}

void write_transfer_csv(std::span<const TransferOutcome> outcomes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  csv::write_row(out, {"variable", "mode", "spearman_transfer", "spearman_text", "delta"});
  for (const auto& o : outcomes) {
    const std::string text = o.spearman_text ? csv::format_number(*o.spearman_text) : "";
    const std::string delta =
        o.spearman_text ? csv::format_number(o.spearman_transfer - *o.spearman_text) : "";
    csv::write_row(out, {o.variable, std::string(to_string(o.mode)),
                         csv::format_number(o.spearman_transfer), text, delta});
  }
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace latent_probe
