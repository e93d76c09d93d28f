"""scikit-learn style front end for certification from a kernel or a scenario."""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError
from .criteria import certify
from .kernel import MomentumKernel, PhysicalScenario, build_kernel
from .measurement import MubPair, ResolutionProfile, density_xx, measurement_tables
from .optimizer import optimize_periods


class MubCertifier(BaseEstimator):
    """Certify entanglement of the state described by a MomentumKernel.

    ``fit`` accepts a MomentumKernel or a PhysicalScenario (built on the fly).
    With T_x=None the periods are optimized.  After fitting, ``report_`` holds
    the CertificationReport, ``score`` returns the witness sum and ``predict``
    the witness verdict.
    """

    def __init__(self, T_x=10.0, x_cen=0.0, p_cen=0.0, fwhm_x_e=0.0, fwhm_p_e=0.0, fwhm_x_g=0.0,
                 fwhm_p_g=0.0, x_max=30.0, bounds=(2.0, 20.0), optimize_centers=True):
        self.T_x = T_x
        self.x_cen = x_cen
        self.p_cen = p_cen
        self.fwhm_x_e = fwhm_x_e
        self.fwhm_p_e = fwhm_p_e
        self.fwhm_x_g = fwhm_x_g
        self.fwhm_p_g = fwhm_p_g
        self.x_max = x_max
        self.bounds = bounds
        self.optimize_centers = optimize_centers

    def _kernel(self, X):
        if isinstance(X, MomentumKernel):
            return X
        if isinstance(X, PhysicalScenario):
            return build_kernel(X)
        raise ValidationError("X must be a MomentumKernel or a PhysicalScenario")

    def _resolution(self):
        return ResolutionProfile(self.fwhm_x_e, self.fwhm_p_e, self.fwhm_x_g, self.fwhm_p_g)

    def fit(self, X, y=None):
        kernel = self._kernel(X)
        res = self._resolution()
        xx = density_xx(kernel, self.x_max)
        if self.T_x is None:
            opt = optimize_periods(kernel, res, bounds=self.bounds, x_max=self.x_max,
                                   optimize_centers=self.optimize_centers, xx_density=xx)
            pair = MubPair.from_period(opt.best_Tx, *opt.best_centers)
            self.optimization_ = opt
        else:
            pair = MubPair.from_period(self.T_x, self.x_cen, self.p_cen)
            self.optimization_ = None
        self.pair_ = pair
        self.tables_ = measurement_tables(kernel, pair, res, self.x_max, xx)
        self.report_ = certify(self.tables_, kernel, {"T_x": pair.T_x, "T_p": pair.T_p})
        return self

    def transform(self, X=None):
        """Correlated entries [P00_xx, P11_xx, P00_pp, P11_pp] of the fitted tables."""
        check_is_fitted(self, "report_")
        xx, pp = self.tables_["xx"].p, self.tables_["pp"].p
        return np.array([[xx[0, 0], xx[1, 1], pp[0, 0], pp[1, 1]]])

    def predict(self, X=None):
        check_is_fitted(self, "report_")
        return np.array([self.report_.entangled["witness"]])

    def score(self, X=None, y=None):
        check_is_fitted(self, "report_")
        return self.report_.witness_sum
