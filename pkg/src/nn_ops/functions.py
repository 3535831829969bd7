import numpy as np

from src.tensor_core.tensor import Function


def same_padding(extent: int, kernel: int, stride: int):
    out = -(-extent // stride)
    total = max((out - 1) * stride + kernel - extent, 0)
    return out, total // 2, total - total // 2


def _taps(start: int, count: int, stride: int) -> slice:
    return slice(start, start + (count - 1) * stride + 1, stride)


class Conv2D(Function):
    """Cross-correlation over (L, H, W, Cin) with weight (kh, kw, Cin, Cout)."""

    def forward(self, x, weight, bias, stride, padding):
        kh, kw, _, cout = weight.shape
        _, height, width, _ = x.shape
        if padding == "same":
            out_h, top, bottom = same_padding(height, kh, stride)
            out_w, left, right = same_padding(width, kw, stride)
            x = np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0)))
            self.crop = (top, top + height, left, left + width)
        else:
            out_h = (height - kh) // stride + 1
            out_w = (width - kw) // stride + 1
            self.crop = (0, height, 0, width)
        self.x_padded, self.weight, self.stride = x, weight, stride
        self.out_hw = (out_h, out_w)

        out = np.zeros((x.shape[0], out_h, out_w, cout), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                patch = x[:, _taps(i, out_h, stride), _taps(j, out_w, stride), :]
                out += patch @ weight[i, j]
        return out + bias

    def backward(self, grad):
        kh, kw = self.weight.shape[:2]
        out_h, out_w = self.out_hw
        x, stride = self.x_padded, self.stride
        grad_x = np.zeros_like(x)
        grad_w = np.zeros_like(self.weight)
        for i in range(kh):
            for j in range(kw):
                rows, cols = _taps(i, out_h, stride), _taps(j, out_w, stride)
                grad_w[i, j] = np.tensordot(x[:, rows, cols, :], grad, axes=([0, 1, 2], [0, 1, 2]))
                grad_x[:, rows, cols, :] += grad @ self.weight[i, j].T
        top, bottom, left, right = self.crop
        return grad_x[:, top:bottom, left:right, :], grad_w, grad.sum(axis=(0, 1, 2))


class ConvTranspose2D(Function):
    """Adjoint of a strided 'valid' convolution, cropped at the bottom/right edges."""

    def forward(self, x, weight, bias, stride, output_hw):
        kh, kw, _, cout = weight.shape
        lead, height, width, _ = x.shape
        full_h, full_w = (height - 1) * stride + kh, (width - 1) * stride + kw
        self.x, self.weight, self.stride = x, weight, stride
        self.full_hw = (full_h, full_w)

        out = np.zeros((lead, full_h, full_w, cout), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                out[:, _taps(i, height, stride), _taps(j, width, stride), :] += x @ weight[i, j]
        out_h, out_w = output_hw
        return out[:, :out_h, :out_w, :] + bias

    def backward(self, grad):
        kh, kw = self.weight.shape[:2]
        _, height, width, _ = self.x.shape
        full = np.zeros(grad.shape[:1] + self.full_hw + grad.shape[-1:], dtype=grad.dtype)
        full[:, : grad.shape[1], : grad.shape[2], :] = grad
        grad_x = np.zeros_like(self.x)
        grad_w = np.zeros_like(self.weight)
        for i in range(kh):
            for j in range(kw):
                window = full[:, _taps(i, height, self.stride), _taps(j, width, self.stride), :]
                grad_x += window @ self.weight[i, j].T
                grad_w[i, j] = np.tensordot(self.x, window, axes=([0, 1, 2], [0, 1, 2]))
        return grad_x, grad_w, grad.sum(axis=(0, 1, 2))


class MaxPool2(Function):
    """2x2 max pooling at stride 2 in ceil mode over (L, H, W, C)."""

    def forward(self, x):
        lead, height, width, channels = x.shape
        out_h, out_w = -(-height // 2), -(-width // 2)
        padded = np.full((lead, 2 * out_h, 2 * out_w, channels), -np.inf, dtype=x.dtype)
        padded[:, :height, :width, :] = x
        windows = (
            padded.reshape(lead, out_h, 2, out_w, 2, channels)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(lead, out_h, out_w, channels, 4)
        )
        # argmax returns the first maximum in row-major window order
        self.argmax = np.argmax(windows, axis=-1)[..., None]
        self.in_shape = x.shape
        return np.take_along_axis(windows, self.argmax, axis=-1)[..., 0]

    def backward(self, grad):
        lead, height, width, channels = self.in_shape
        out_h, out_w = grad.shape[1:3]
        routed = np.zeros(grad.shape + (4,), dtype=grad.dtype)
        np.put_along_axis(routed, self.argmax, grad[..., None], axis=-1)
        full = (
            routed.reshape(lead, out_h, out_w, channels, 2, 2)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(lead, 2 * out_h, 2 * out_w, channels)
        )
        return (full[:, :height, :width, :],)


class Conv3D1x1(Function):
    """Per-pixel linear map over the feature-map axis: (L, T, H, W, C) -> (L, M, H, W, C)."""

    def forward(self, x, weight, bias):
        self.x, self.weight = x, weight
        return np.einsum("lthwc,tm->lmhwc", x, weight) + bias[:, None, None, None]

    def backward(self, grad):
        grad_x = np.einsum("lmhwc,tm->lthwc", grad, self.weight)
        grad_w = np.einsum("lthwc,lmhwc->tm", self.x, grad)
        return grad_x, grad_w, grad.sum(axis=(0, 2, 3, 4))
