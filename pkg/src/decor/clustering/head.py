"""Two-layer MLP that reproduces the mixture's soft assignments."""

import logging

import numpy as np
import torch

from ..exceptions import ShapeError

logger = logging.getLogger(__name__)


def softmax(logits):
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class MLPHead:
    """``softmax(W2 relu(W1 x' + b1) + b2)`` where ``x'`` is ``x`` scaled by
    the training mean and standard deviation."""

    def __init__(self, center, scale, W1, b1, W2, b2):
        self.center = np.asarray(center, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.W1, self.b1 = np.asarray(W1, dtype=float), np.asarray(b1, dtype=float)
        self.W2, self.b2 = np.asarray(W2, dtype=float), np.asarray(b2, dtype=float)
        self.agreement = float("nan")
        self.epochs = 0
        self.warning = ""

    @property
    def n_features(self):
        return self.W1.shape[1]

    @property
    def n_clusters(self):
        return self.W2.shape[0]

    def arrays(self):
        return [self.center, self.scale, self.W1, self.b1, self.W2, self.b2]

    def logits(self, Z):
        Z = np.asarray(Z, dtype=float)
        if Z.ndim != 2 or Z.shape[1] != self.n_features:
            raise ShapeError(f"expected (n, {self.n_features}) embeddings, got shape {Z.shape}")
        h = np.maximum((Z - self.center) / self.scale @ self.W1.T + self.b1, 0.0)
        return h @ self.W2.T + self.b2

    def predict_proba(self, Z):
        return softmax(self.logits(Z))


def fit_head(Z, responsibilities, hidden=50, max_epochs=2000, target=0.99,
             learning_rate=1e-2, seed=0):
    """Distil soft targets into an :class:`MLPHead` by cross-entropy.

    Training stops once the head's argmax agrees with the targets' argmax on
    at least ``target`` of the rows, or after ``max_epochs`` full-batch Adam
    steps; in the latter case ``head.warning`` says so.
    """
    Z = np.asarray(Z, dtype=float)
    R = np.asarray(responsibilities, dtype=float)
    if len(Z) != len(R):
        raise ShapeError(f"{len(Z)} embeddings but {len(R)} responsibility rows")
    n, d = Z.shape
    K = R.shape[1]
    center = Z.mean(axis=0)
    scale = Z.std(axis=0)
    scale[scale == 0] = 1.0
    gen = torch.Generator().manual_seed(int(seed))
    bound1, bound2 = 1 / np.sqrt(d), 1 / np.sqrt(hidden)
    W1 = (torch.rand(hidden, d, generator=gen, dtype=torch.float64) * 2 - 1) * bound1
    W2 = (torch.rand(K, hidden, generator=gen, dtype=torch.float64) * 2 - 1) * bound2
    params = [W1, torch.zeros(hidden, dtype=torch.float64), W2,
              torch.zeros(K, dtype=torch.float64)]
    for p in params:
        p.requires_grad_(True)
    X = torch.as_tensor((Z - center) / scale)
    T = torch.as_tensor(R)
    want = R.argmax(axis=1)
    opt = torch.optim.Adam(params, lr=learning_rate)

    def forward():
        return torch.relu(X @ params[0].T + params[1]) @ params[2].T + params[3]

    agreement, epoch = 0.0, 0
    for epoch in range(1, max_epochs + 1):
        opt.zero_grad()
        logits = forward()
        agreement = float((logits.argmax(dim=1).numpy() == want).mean())
        if agreement >= target:
            epoch -= 1
            break
        loss = -(T * torch.log_softmax(logits, dim=1)).sum(dim=1).mean()
        loss.backward()
        opt.step()
    else:
        with torch.no_grad():
            agreement = float((forward().argmax(dim=1).numpy() == want).mean())
    head = MLPHead(center, scale, *(p.detach().numpy().copy() for p in params))
    head.agreement = agreement
    head.epochs = epoch
    if agreement < target:
        head.warning = (f"head agreement {agreement:.4f} below target {target} "
                        f"after {max_epochs} epochs")
        logger.warning(head.warning)
    return head


def soft_cluster(Z, head):
    """Soft memberships ``P`` (rows sum to one)."""
    return head.predict_proba(Z)
