"""The multi-view embedding model.

Per view (verb, noun) there is a video-side net and a text-side net, each
ending in L2 normalization. The action view is the L2-normalized
concatenation of the verb and noun embeddings; an optional learned affine
head over the concatenation can be enabled instead. Parameters per view are
independent: verb losses never touch noun parameters, action losses touch
both.

The model is read-shared during embedding and labelling phases and owned by
exactly one trainer during update phases.
"""

from __future__ import annotations

import numpy as np

from . import kernels as K
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import Gallery, VIEWS
from .errors import DimensionMismatchError, FormatError
from .nn import NORM_EPS, EmbeddingNet

MODALITIES = ("video", "text")


class MultiViewModel:
    def __init__(self, nets: dict, embed_dim: int, learned_action_head: bool):
        self.nets = nets
        self.embed_dim = embed_dim
        self.learned_action_head = learned_action_head

    @classmethod
    def create(cls, d_video: int, d_text: int, video_hidden=(228,), text_hidden=(1664,),
               embed_dim: int = 256, learned_action_head: bool = False,
               rng: np.random.Generator | None = None) -> "MultiViewModel":
        rng = rng or np.random.default_rng(0)
        nets = {}
        for view in ("verb", "noun"):
            nets[f"{view}_video"] = EmbeddingNet.create([d_video, *video_hidden, embed_dim], rng)
            nets[f"{view}_text"] = EmbeddingNet.create([d_text, *text_hidden, embed_dim], rng)
        if learned_action_head:
            for modality in MODALITIES:
                nets[f"action_{modality}"] = EmbeddingNet.create(
                    [2 * embed_dim, 2 * embed_dim], rng)
        return cls(nets, embed_dim, learned_action_head)

    @property
    def d_video(self) -> int:
        return self.nets["verb_video"].input_dim

    @property
    def d_text(self) -> int:
        return self.nets["verb_text"].input_dim

    @property
    def action_dim(self) -> int:
        return 2 * self.embed_dim

    def view_dim(self, view: str) -> int:
        return self.action_dim if view == "action" else self.embed_dim

    def named_parameters(self) -> dict:
        params = {}
        for name, net in self.nets.items():
            for i, (w, b) in enumerate(zip(net.weights, net.biases)):
                params[f"{name}.{i}.w"] = w
                params[f"{name}.{i}.b"] = b
        return params

    def zero_grads(self) -> dict:
        return {name: net.zero_grads() for name, net in self.nets.items()}

    @staticmethod
    def flatten_grads(grads: dict) -> dict:
        flat = {}
        for name, layers in grads.items():
            for i, (gw, gb) in enumerate(layers):
                flat[f"{name}.{i}.w"] = gw
                flat[f"{name}.{i}.b"] = gb
        return flat

    def embed_batch(self, x: np.ndarray, view: str, modality: str) -> np.ndarray:
        """Unit-norm embeddings of a batch in the requested view."""
        if view not in VIEWS:
            raise ValueError(f"unknown view {view!r}")
        if modality not in MODALITIES:
            raise ValueError(f"unknown modality {modality!r}")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if view in ("verb", "noun"):
            return self.nets[f"{view}_{modality}"].forward_batch(x)
        yv = self.nets[f"verb_{modality}"].forward_batch(x)
        yn = self.nets[f"noun_{modality}"].forward_batch(x)
        concat = np.concatenate([yv, yn], axis=1)
        if self.learned_action_head:
            return self.nets[f"action_{modality}"].forward_batch(concat)
        y, _, _ = K.l2norm_rows(concat, NORM_EPS)
        return y

    def embed_video(self, video_feature: np.ndarray, view: str) -> np.ndarray:
        return self.embed_batch(video_feature, view, "video")[0]

    def embed_text(self, text_feature: np.ndarray, view: str) -> np.ndarray:
        return self.embed_batch(text_feature, view, "text")[0]

    def header_meta(self) -> dict:
        return {
            "views": list(VIEWS),
            "embed_dim": self.embed_dim,
            "action_dim": self.action_dim,
            "d_video": self.d_video,
            "d_text": self.d_text,
            "learned_action_head": self.learned_action_head,
        }


class ModalityForward:
    """One modality's forward pass over a batch, all views, caches kept.

    Loss terms scatter output-space gradients into per-view accumulators with
    `add_grad`; `backward` then pushes everything through the nets exactly
    once, folding action-view gradients into the verb and noun nets.
    """

    def __init__(self, model: MultiViewModel, x: np.ndarray, modality: str):
        self.model = model
        self.modality = modality
        net_v = model.nets[f"verb_{modality}"]
        net_n = model.nets[f"noun_{modality}"]
        x = np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64)
        self.yv, self._cache_v = net_v.forward_batch(x, want_cache=True)
        self.yn, self._cache_n = net_n.forward_batch(x, want_cache=True)
        concat = np.concatenate([self.yv, self.yn], axis=1)
        if model.learned_action_head:
            head = model.nets[f"action_{modality}"]
            self.ya, self._cache_a = head.forward_batch(concat, want_cache=True)
        else:
            self.ya, self._norms_a, self._skipped_a = K.l2norm_rows(concat, NORM_EPS)
        self._g = {view: None for view in VIEWS}

    def out(self, view: str) -> np.ndarray:
        return {"verb": self.yv, "noun": self.yn, "action": self.ya}[view]

    def add_grad(self, view: str, idx: np.ndarray, rows: np.ndarray) -> None:
        """Accumulate upstream gradient rows at batch positions idx."""
        if self._g[view] is None:
            self._g[view] = np.zeros_like(self.out(view))
        K.add_rows(self._g[view], np.asarray(idx, dtype=np.int64),
                   np.ascontiguousarray(rows, dtype=np.float64))

    def touched(self) -> bool:
        return any(g is not None for g in self._g.values())

    def backward(self, grads: dict) -> None:
        """Accumulate parameter gradients of everything added via add_grad."""
        g_v = self._g["verb"]
        g_n = self._g["noun"]
        if self._g["action"] is not None:
            if self.model.learned_action_head:
                head_name = f"action_{self.modality}"
                head = self.model.nets[head_name]
                head_grads, g_concat = head.backward_batch(self._cache_a, self._g["action"])
                _accumulate(grads[head_name], head_grads)
            else:
                g_concat = K.l2norm_rows_backward(
                    self._g["action"], self.ya, self._norms_a, self._skipped_a)
            d = self.model.embed_dim
            g_v = g_concat[:, :d] if g_v is None else g_v + g_concat[:, :d]
            g_n = g_concat[:, d:] if g_n is None else g_n + g_concat[:, d:]
        if g_v is not None:
            net_grads, _ = self.model.nets[f"verb_{self.modality}"].backward_batch(
                self._cache_v, np.ascontiguousarray(g_v))
            _accumulate(grads[f"verb_{self.modality}"], net_grads)
        if g_n is not None:
            net_grads, _ = self.model.nets[f"noun_{self.modality}"].backward_batch(
                self._cache_n, np.ascontiguousarray(g_n))
            _accumulate(grads[f"noun_{self.modality}"], net_grads)


def _accumulate(acc, extra):
    for (aw, ab), (ew, eb) in zip(acc, extra):
        aw += ew
        ab += eb


def save_model(path, model: MultiViewModel, extra_arrays: dict | None = None,
               meta: dict | None = None) -> None:
    header = model.header_meta()
    if meta:
        header = {**header, **meta}
    save_checkpoint(path, model.nets, extra_arrays or {}, header)


def load_model(path):
    """Load a checkpoint; returns (model, extra arrays, meta)."""
    net_data, extra, meta = load_checkpoint(path)
    required = {"embed_dim", "learned_action_head"}
    if not required <= meta.keys():
        raise FormatError(f"{path}: checkpoint metadata missing {sorted(required - meta.keys())}")
    nets = {name: EmbeddingNet(w, b) for name, (w, b) in net_data.items()}
    model = MultiViewModel(nets, int(meta["embed_dim"]), bool(meta["learned_action_head"]))
    for key in ("verb_video", "verb_text", "noun_video", "noun_text"):
        if key not in nets:
            raise FormatError(f"{path}: checkpoint missing net {key!r}")
    return model, extra, meta


def export_embeddings(path, model: MultiViewModel, galleries: dict) -> int:
    """Write one CSV row per (item, view) for every gallery; returns row count.

    Columns: id, domain, view, then the embedding values.
    """
    rows = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id,domain,view,values...\n")
        for domain, gallery in galleries.items():
            for view in VIEWS:
                emb = model.embed_batch(gallery.video, view, "video")
                for i in range(emb.shape[0]):
                    vals = ",".join(f"{v:.10g}" for v in emb[i])
                    fh.write(f"{i},{domain},{view},{vals}\n")
                    rows += 1
    return rows


def galleries_dims_check(model: MultiViewModel, gallery: Gallery) -> None:
    if gallery.video.shape[1] != model.d_video:
        raise DimensionMismatchError("gallery video dim", model.d_video, gallery.video.shape[1])
    if gallery.text is not None and gallery.text.shape[1] != model.d_text:
        raise DimensionMismatchError("gallery text dim", model.d_text, gallery.text.shape[1])
