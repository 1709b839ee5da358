#ifndef ESP_DATASET_HPP
#define ESP_DATASET_HPP

#include <Eigen/Core>
#include <iosfwd>
#include <string>
#include <vector>

namespace esp {

/// Immutable sample of T observations, each a row of p real numbers.
/// Construction validates T >= 2 and rejects non-finite entries; rows are
/// never modified afterwards, so concurrent readers need no locking.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd rows, std::vector<std::string> column_names = {});

  /// Parses a comma-separated file whose first line names the columns.
  /// Any unparsable field aborts with the 1-based line number in the message.
  static Dataset from_csv(const std::string& path);
  static Dataset from_csv_stream(std::istream& in, const std::string& origin);

  const Eigen::MatrixXd& rows() const noexcept { return rows_; }
  const std::vector<std::string>& column_names() const noexcept { return column_names_; }

  Eigen::Index size() const noexcept { return rows_.rows(); }
  Eigen::Index dim() const noexcept { return rows_.cols(); }

  /// Index of a named column, or -1 when the dataset carries no header
  /// or the name is absent.
  Eigen::Index column_index(const std::string& name) const;

 private:
  Eigen::MatrixXd rows_;
  std::vector<std::string> column_names_;
};

}  // namespace esp

#endif  // ESP_DATASET_HPP
