"""One-vs-all linear SVM (dual coordinate descent), mirror augmentation, and
majority voting across camera views."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .tracker import PersonTrack
from .validation import as_float_2d, check_feature_dim
from .videoio import FrameSequence


def _dual_cd(gram, diag, y, C, tol, max_iter, rng):
    """Coordinate descent on the dual of the L2-regularized hinge-loss SVM.

    Works entirely in Gram space; returns the dual coefficients, the
    per-epoch objective (negated dual, so it is exactly nonincreasing) and the
    final relative duality gap.
    """
    n = len(y)
    alpha = np.zeros(n)
    margins = np.zeros(n)  # (Q alpha)_i with Q_ij = y_i y_j K_ij
    objective_path = []
    gap = np.inf
    for _ in range(max_iter):
        for i in rng.permutation(n):
            gradient = margins[i] - 1.0
            if alpha[i] <= 0.0:
                projected = min(gradient, 0.0)
            elif alpha[i] >= C:
                projected = max(gradient, 0.0)
            else:
                projected = gradient
            if projected == 0.0:
                continue
            updated = min(max(alpha[i] - gradient / diag[i], 0.0), C)
            delta = updated - alpha[i]
            if delta != 0.0:
                margins += delta * y[i] * y * gram[i]
                alpha[i] = updated
        reg = 0.5 * float(alpha @ margins)
        dual = float(alpha.sum()) - reg
        primal = reg + C * float(np.maximum(0.0, 1.0 - margins).sum())
        objective_path.append(-dual)
        gap = (primal - dual) / max(1.0, abs(primal))
        if gap <= tol:
            break
    return alpha, np.asarray(objective_path), gap


class LinearSvmOva(BaseEstimator, ClassifierMixin):
    """P binary hinge-loss linear classifiers in a one-vs-all arrangement.

    The bias is handled through an implicit constant feature (so it is
    regularized like the weights). The solver runs on the Gram matrix, which
    suits the many-features / few-samples regime of high-dimensional gait
    vectors; each binary problem is optimized to relative duality gap `tol`.

    Attributes: classes_, coef_ (P, n_features), intercept_ (P,),
    objective_paths_ (per class, exactly nonincreasing), gaps_.
    """

    def __init__(self, C=1.0, tol=1e-4, max_iter=1000, random_state=None):
        self.C = C
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y):
        X = as_float_2d(X)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError("X and y length mismatch")
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes")

        gram = X @ X.T + 1.0  # +1: the implicit bias feature
        diag = np.diag(gram).copy()
        seeds = np.random.SeedSequence(self.random_state).spawn(len(self.classes_))
        self.coef_ = np.zeros((len(self.classes_), X.shape[1]))
        self.intercept_ = np.zeros(len(self.classes_))
        self.objective_paths_ = []
        self.gaps_ = []
        for idx, label in enumerate(self.classes_):
            binary = np.where(y == label, 1.0, -1.0)
            alpha, path, gap = _dual_cd(
                gram, diag, binary, self.C, self.tol, self.max_iter,
                np.random.default_rng(seeds[idx]),
            )
            scaled = alpha * binary
            self.coef_[idx] = X.T @ scaled
            self.intercept_[idx] = scaled.sum()
            self.objective_paths_.append(path)
            self.gaps_.append(gap)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = as_float_2d(X)
        check_feature_dim(X, self.coef_.shape[1])
        return X @ self.coef_.T + self.intercept_

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]


def select_c(X, y, groups, candidates=(0.1, 1.0, 10.0, 100.0), tol=1e-4,
             max_iter=1000, random_state=None):
    """Pick C by leave-one-group-out accuracy on the training data.

    Groups are typically trajectory ids; ties go to the smallest C.
    """
    X = as_float_2d(X)
    y = np.asarray(y)
    groups = np.asarray(groups)
    unique_groups = np.unique(groups)
    if len(unique_groups) < 2:
        return sorted(candidates)[len(candidates) // 2]
    best_c, best_acc = None, -1.0
    for C in sorted(candidates):
        hits = total = 0
        for g in unique_groups:
            held = groups == g
            if len(np.unique(y[~held])) < 2:
                continue
            model = LinearSvmOva(C=C, tol=tol, max_iter=max_iter,
                                 random_state=random_state).fit(X[~held], y[~held])
            hits += int((model.predict(X[held]) == y[held]).sum())
            total += int(held.sum())
        acc = hits / total if total else 0.0
        if acc > best_acc:
            best_c, best_acc = C, acc
    return best_c


@dataclass
class VoteResult:
    label: object
    per_view_labels: list
    per_view_scores: list
    tie_broken: bool = False


def majority_vote(per_view_labels, per_view_scores=None, classes=None) -> VoteResult:
    """Most frequent per-view label; ties resolved by the largest summed
    continuous score of the tied labels across views."""
    labels = list(per_view_labels)
    if not labels:
        raise ValueError("need at least one view")
    counts = Counter(labels)
    top = max(counts.values())
    tied = sorted(label for label, c in counts.items() if c == top)
    if len(tied) == 1:
        return VoteResult(label=tied[0], per_view_labels=labels,
                          per_view_scores=list(per_view_scores or []))
    if per_view_scores is None or classes is None:
        raise ValueError("tied vote needs per-view scores and the class table")
    classes = list(classes)
    sums = {
        label: sum(float(scores[classes.index(label)]) for scores in per_view_scores)
        for label in tied
    }
    best_sum = max(sums.values())
    winner = min(label for label in tied if sums[label] == best_sum)
    return VoteResult(label=winner, per_view_labels=labels,
                      per_view_scores=list(per_view_scores), tie_broken=True)


def mirror_sequence(sequence: FrameSequence,
                    tracks: list[PersonTrack]) -> tuple[FrameSequence, list[PersonTrack]]:
    """Horizontally flip frames and reflect boxes: x -> W-1-x (inclusive corners).

    The full pipeline re-runs on the mirrored data; there is no descriptor
    shortcut (reflection changes the sign structure of the kinematics).
    """
    width = sequence.width
    flipped = sequence.frames[:, :, ::-1].copy()
    mirrored_tracks = []
    for track in tracks:
        boxes = track.boxes.copy()
        boxes[:, 0], boxes[:, 2] = width - 1 - track.boxes[:, 2], width - 1 - track.boxes[:, 0]
        mirrored_tracks.append(PersonTrack(
            track_id=track.track_id,
            frames=track.frames.copy(),
            boxes=boxes,
            detection_scores=None if track.detection_scores is None else track.detection_scores.copy(),
        ))
    return (
        FrameSequence(frames=flipped, view_id=sequence.view_id,
                      subject_id=sequence.subject_id, trajectory_id=sequence.trajectory_id),
        mirrored_tracks,
    )
