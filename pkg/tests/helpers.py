"""Shared test oracles: brute-force convolution and a central finite-difference
gradient checker, both independent of the library paths they verify."""

import torch


def brute_conv2d(x, weight, bias=None, padding=0, dilation=1):
    """Sliding-window dot-product convolution (zero padding), evaluated by loops.

    x: (C_in, H, W); weight: (C_out, C_in, k, k). Matches torch's
    cross-correlation convention.
    """
    c_in, h, w = x.shape
    c_out, _, k, _ = weight.shape
    span = dilation * (k - 1)
    padded = torch.zeros(c_in, h + 2 * padding, w + 2 * padding, dtype=x.dtype)
    padded[:, padding:padding + h, padding:padding + w] = x
    h_out = h + 2 * padding - span
    w_out = w + 2 * padding - span
    out = torch.zeros(c_out, h_out, w_out, dtype=x.dtype)
    for co in range(c_out):
        for i in range(h_out):
            for j in range(w_out):
                acc = 0.0
                for ci in range(c_in):
                    for a in range(k):
                        for b in range(k):
                            acc += (
                                weight[co, ci, a, b].item()
                                * padded[ci, i + a * dilation, j + b * dilation].item()
                            )
                out[co, i, j] = acc + (bias[co].item() if bias is not None else 0.0)
    return out


def manual_layer_norm(x, weight, bias, eps=1e-6):
    """Channel-dimension layer norm at each position, written out directly."""
    mu = x.mean(dim=0, keepdim=True)
    var = ((x - mu) ** 2).mean(dim=0, keepdim=True)
    y = (x - mu) / torch.sqrt(var + eps)
    return y * weight[:, None, None] + bias[:, None, None]


def manual_prelu(x, slope):
    return torch.where(x >= 0, x, slope[:, None, None] * x)


def fd_gradcheck(make_loss, leaves, n_probes=20, rel_tol=1e-4, seed=0, h=1e-6,
                 grads=None, atol=1e-8):
    """Compare autograd gradients of make_loss() against central finite
    differences at randomly probed entries of the leaf tensors.

    Passes when |fd - autograd| <= atol + rel_tol * max(|fd|, |autograd|);
    the absolute floor covers gradients at the probe's own noise level.
    `grads` may supply externally computed gradients (aligned with `leaves`)
    to check instead of calling autograd here. Returns the worst relative
    error seen among resolvable probes.
    """
    leaves = list(leaves)
    if grads is None:
        loss = make_loss()
        grads = torch.autograd.grad(loss, leaves)
    gen = torch.Generator().manual_seed(seed)
    worst = 0.0
    for _ in range(n_probes):
        li = int(torch.randint(len(leaves), (1,), generator=gen))
        leaf = leaves[li]
        idx = int(torch.randint(leaf.numel(), (1,), generator=gen))
        flat = leaf.detach().reshape(-1)
        orig = flat[idx].item()
        step = h * max(1.0, abs(orig))
        with torch.no_grad():
            flat[idx] = orig + step
            f_plus = make_loss().item()
            flat[idx] = orig - step
            f_minus = make_loss().item()
            flat[idx] = orig
        fd = (f_plus - f_minus) / (2 * step)
        an = grads[li].reshape(-1)[idx].item()
        denom = max(abs(fd), abs(an))
        err = abs(fd - an)
        assert err <= atol + rel_tol * denom, (
            f"leaf {li} idx {idx}: fd={fd} autograd={an} err={err}"
        )
        if denom > atol:
            worst = max(worst, err / denom)
    return worst


def projection_loss(seed=0):
    """A fixed random linear functional, turning tensors into scalars for
    gradient probing without masking any coordinate."""
    gen = torch.Generator().manual_seed(seed)
    cache = {}

    def apply(*tensors):
        total = 0.0
        for i, t in enumerate(tensors):
            key = (i, tuple(t.shape))
            if key not in cache:
                cache[key] = torch.randn(t.shape, generator=gen, dtype=torch.float64)
            total = total + (t * cache[key]).sum()
        return total

    return apply
