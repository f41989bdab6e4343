"""Exception types raised across mfpkit."""


class MFPError(Exception):
    """Base class for every error raised by this package."""


class DataError(MFPError):
    pass


class MissingColumn(DataError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"missing column {column!r}")


class NonNumericCell(DataError):
    def __init__(self, row, column, value):
        self.row, self.column, self.value = row, column, value
        super().__init__(f"non-numeric value {value!r} in column {column!r}, row {row}")


class MissingValue(DataError):
    def __init__(self, row, column):
        self.row, self.column = row, column
        super().__init__(f"missing value in column {column!r}, row {row}")


class SingleLevel(DataError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"categorical variable {column!r} has a single observed level")


class NonPositiveInput(MFPError):
    def __init__(self, index, value, name=None):
        self.index, self.value, self.name = index, value, name
        label = f" of {name!r}" if name else ""
        super().__init__(f"FP transform needs x > 0; value{label} at index {index} is {value!r}")


class FitError(MFPError):
    pass


class RankDeficient(FitError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient; dependent columns: {self.columns}")


class DegenerateFit(FitError):
    def __init__(self, rss, n):
        self.rss, self.n = rss, n
        super().__init__(f"residual sum of squares {rss:.3g} is numerically zero (n={n}); deviance undefined")


class MismatchedFits(FitError):
    def __init__(self, n_a, n_b):
        super().__init__(f"fits use different sample sizes ({n_a} vs {n_b})")


class NameMismatch(MFPError):
    def __init__(self, only_a, only_b):
        self.only_a, self.only_b = sorted(only_a), sorted(only_b)
        super().__init__(f"models have different predictors: only in a {self.only_a}, only in b {self.only_b}")


class VariableNotInModel(MFPError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"variable {name!r} is not selected in the model")


class NonPSDCorrelation(MFPError):
    def __init__(self, eigenvalue):
        self.eigenvalue = eigenvalue
        super().__init__(f"correlation matrix is not positive semi-definite after repair (min eigenvalue {eigenvalue:.3g})")


class NonPositiveX5(MFPError):
    def __init__(self, value):
        super().__init__(f"x5 must be positive, got {value!r}")
