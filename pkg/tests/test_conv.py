import numpy as np
import pytest

from gdconv.conv import (
    Freedom,
    freedom_frozen_fields,
    gdconv_backward,
    gdconv_forward,
    load_params,
    make_adacof,
    make_conventional,
    make_flow,
    make_freedom,
    params_init,
    params_new,
    save_params,
)
from gdconv.core import Frame, field_from_array, frame_from_array, stack_new
from gdconv.interp import InterpKind

from oracles import adacof_ref, conventional_ref, flow_warp_ref

POLY = InterpKind("poly")
LINEAR = InterpKind("linear")


def random_stack(rng, h, w, c, p):
    return stack_new([Frame(h, w, c, rng.uniform(0, 1, (h, w, c))) for _ in range(p)])


def random_params(rng, h, w, n, p, z_margin=2e-3):
    shape = (h, w, n)
    z = rng.uniform(z_margin, p - 1 - z_margin, shape)
    return params_new(
        rng.uniform(-1, 1, shape),
        rng.uniform(-1.5, 1.5, shape),
        rng.uniform(-1.5, 1.5, shape),
        z,
        rng.uniform(0.05, 0.95, shape),
        rng.uniform(-1.5, 1.5, (h, w, n * p)) + 0.217,
        rng.uniform(-1.5, 1.5, (h, w, n * p)) + 0.173,
        t_plus_1=p,
    )


class TestParamsInit:
    def test_init_values(self):
        pr = params_init(4, 4, 2, 3)
        assert np.all(pr.z.data == 0.0)
        assert np.all(pr.mod.data == 1.0)
        assert np.all(pr.weights.data == 0.5)  # 1/N with N=2
        assert np.all(pr.dx.data == 0.0) and np.all(pr.dy.data == 0.0)
        assert np.all(pr.sup_dx.data == 0.0) and np.all(pr.sup_dy.data == 0.0)
        assert pr.sup_dx.depth == 2 * 4  # (T+1)*N

    def test_layout_channel_count(self):
        pr = params_init(4, 4, 2, 3)
        n, p = pr.n_points, pr.t_plus_1
        total = pr.sup_dx.depth + pr.sup_dy.depth + pr.dx.depth + pr.dy.depth + pr.z.depth
        total += pr.mod.depth + pr.weights.depth
        assert total == 2 * p * n + 3 * n + n + n

    def test_clamping_at_construction(self):
        h, w, n, p = 2, 2, 1, 3
        shape = (h, w, n)
        pr = params_new(
            np.ones(shape), np.zeros(shape), np.zeros(shape),
            np.full(shape, 9.0), np.full(shape, -0.5),
            np.zeros((h, w, n * p)), np.zeros((h, w, n * p)), t_plus_1=p,
        )
        assert np.all(pr.z.data == 2.0)
        assert np.all(pr.mod.data == 0.0)
        assert pr.z_locked.all() and pr.mod_locked.all()


class TestForward:
    def test_node_identity_returns_source_frame(self):
        rng = np.random.default_rng(0)
        stack = random_stack(rng, 5, 4, 2, 4)
        h, w, n, p = 5, 4, 1, 4
        pr = params_new(
            np.ones((h, w, n)), np.zeros((h, w, n)), np.zeros((h, w, n)),
            np.ones((h, w, n)), np.ones((h, w, n)),
            np.zeros((h, w, n * p)), np.zeros((h, w, n * p)), t_plus_1=p,
        )
        out = gdconv_forward(stack, pr, POLY)
        np.testing.assert_array_equal(out.data, stack.frames[1].data)

    def test_zero_modulation_annihilates(self):
        rng = np.random.default_rng(1)
        stack = random_stack(rng, 4, 4, 1, 3)
        pr = random_params(rng, 4, 4, 2, 3)
        fields = {k: getattr(pr, k).data for k in ("weights", "dx", "dy", "z", "sup_dx", "sup_dy")}
        pr0 = params_new(
            fields["weights"], fields["dx"], fields["dy"], fields["z"],
            np.zeros((4, 4, 2)), fields["sup_dx"], fields["sup_dy"], t_plus_1=3,
        )
        out = gdconv_forward(stack, pr0, POLY)
        assert np.all(out.data == 0.0)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(2)
        stack = random_stack(rng, 4, 4, 1, 3)
        with pytest.raises(ValueError):
            gdconv_forward(stack, params_init(4, 4, 2, 1), POLY)
        with pytest.raises(ValueError):
            gdconv_forward(stack, params_init(5, 4, 2, 2), POLY)

    @pytest.mark.parametrize("kind", [LINEAR, POLY, InterpKind("inv1d"), InterpKind("inv3d")])
    def test_linear_in_source_frames(self, kind):
        rng = np.random.default_rng(3)
        h, w, c, p, n = 4, 5, 1, 3, 2
        pr = random_params(rng, h, w, n, p)
        s1 = random_stack(rng, h, w, c, p)
        s2 = random_stack(rng, h, w, c, p)
        a, b = 0.7, -1.3
        mixed = stack_new(
            [Frame(h, w, c, a * f1.data + b * f2.data) for f1, f2 in zip(s1.frames, s2.frames)]
        )
        lhs = gdconv_forward(mixed, pr, kind).data
        rhs = a * gdconv_forward(s1, pr, kind).data + b * gdconv_forward(s2, pr, kind).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_modulation_scaling(self):
        rng = np.random.default_rng(4)
        h, w, c, p, n = 4, 4, 2, 3, 2
        stack = random_stack(rng, h, w, c, p)
        pr = random_params(rng, h, w, n, p)
        base = {k: getattr(pr, k).data for k in
                ("weights", "dx", "dy", "z", "sup_dx", "sup_dy")}
        for alpha in (0.0, 0.25, 1.0):
            mod = np.full((h, w, n), 0.8)
            full = params_new(base["weights"], base["dx"], base["dy"], base["z"],
                              mod, base["sup_dx"], base["sup_dy"], t_plus_1=p)
            scaled = params_new(base["weights"], base["dx"], base["dy"], base["z"],
                                alpha * mod, base["sup_dx"], base["sup_dy"], t_plus_1=p)
            lhs = gdconv_forward(stack, scaled, POLY).data
            rhs = alpha * gdconv_forward(stack, full, POLY).data
            np.testing.assert_allclose(lhs, rhs, atol=1e-13)


class TestDegenerations:
    def test_conventional_matches_oracle(self):
        rng = np.random.default_rng(5)
        h, w, c, t, kernel = 5, 5, 1, 1, 3
        p, m = t + 1, kernel * kernel
        stack = random_stack(rng, h, w, c, p)
        wmap = rng.uniform(-1, 1, (h, w, p, m))
        pr = make_conventional(h, w, t, kernel, field_from_array(wmap.reshape(h, w, p * m)))
        assert pr.n_points == 18
        got = gdconv_forward(stack, pr, LINEAR).data
        offsets = [(gx - 1, gy - 1) for gy in range(3) for gx in range(3)]
        want = conventional_ref([f.data for f in stack.frames], wmap, offsets)
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_conventional_partition_of_unity(self):
        h, w, t, kernel = 4, 4, 1, 3
        n = (t + 1) * kernel * kernel
        stack = stack_new([frame_from_array(np.full((h, w), 0.625)) for _ in range(2)])
        pr = make_conventional(h, w, t, kernel, field_from_array(np.full((h, w, n), 1.0 / n)))
        out = gdconv_forward(stack, pr, LINEAR)
        np.testing.assert_allclose(out.data, 0.625, atol=1e-12)

    def test_conventional_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            make_conventional(4, 4, 1, 2, field_from_array(np.zeros((4, 4, 8))))

    def test_adacof_matches_oracle(self):
        rng = np.random.default_rng(6)
        h, w, c, t, m = 8, 8, 1, 1, 4
        p = t + 1
        n = p * m
        stack = random_stack(rng, h, w, c, p)
        alpha = rng.uniform(-2, 2, (h, w, p, m))
        beta = rng.uniform(-2, 2, (h, w, p, m))
        wmap = rng.uniform(-1, 1, (h, w, p, m))
        pr = make_adacof(
            field_from_array(alpha.reshape(h, w, n)),
            field_from_array(beta.reshape(h, w, n)),
            field_from_array(wmap.reshape(h, w, n)),
            t, m,
        )
        got = gdconv_forward(stack, pr, POLY).data
        want = adacof_ref([f.data for f in stack.frames], wmap, alpha, beta)
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_adacof_integer_offsets_hit_exact_pixels(self):
        rng = np.random.default_rng(7)
        h, w = 6, 6
        stack = random_stack(rng, h, w, 1, 2)
        alpha = np.full((h, w, 2), 1.0)
        beta = np.zeros((h, w, 2))
        wmap = np.zeros((h, w, 2))
        wmap[:, :, 0] = 1.0  # only the frame-0 point
        pr = make_adacof(field_from_array(alpha), field_from_array(beta),
                         field_from_array(wmap), 1, 1)
        out = gdconv_forward(stack, pr, LINEAR).data
        src = stack.frames[0].data
        np.testing.assert_array_equal(out[:, :-1], src[:, 1:])  # shifted by one column
        np.testing.assert_array_equal(out[:, -1], src[:, -1])  # border clamp

    def test_adacof_depth_mismatch(self):
        with pytest.raises(ValueError):
            make_adacof(
                field_from_array(np.zeros((4, 4, 3))),
                field_from_array(np.zeros((4, 4, 3))),
                field_from_array(np.zeros((4, 4, 3))),
                t=1, m=2,
            )

    def test_flow_zero_reproduces_source(self):
        rng = np.random.default_rng(8)
        stack = random_stack(rng, 5, 5, 2, 4)
        for idx in range(4):
            pr = make_flow(
                field_from_array(np.zeros((5, 5, 1))),
                field_from_array(np.zeros((5, 5, 1))),
                idx, 3,
            )
            out = gdconv_forward(stack, pr, POLY)
            np.testing.assert_array_equal(out.data, stack.frames[idx].data)

    def test_flow_integer_translation(self):
        h, w = 5, 7
        img = np.zeros((h, w))
        img[2, 3] = 1.0
        stack = stack_new([frame_from_array(img), frame_from_array(np.zeros((h, w)))])
        pr = make_flow(
            field_from_array(np.full((h, w, 1), 1.0)),
            field_from_array(np.zeros((h, w, 1))),
            0, 1,
        )
        out = gdconv_forward(stack, pr, LINEAR).data[:, :, 0]
        assert out[2, 2] == 1.0  # impulse moved one column left under backward warp
        assert out[2, 3] == 0.0

    def test_flow_matches_oracle(self):
        rng = np.random.default_rng(9)
        h, w, c = 6, 6, 2
        stack = random_stack(rng, h, w, c, 3)
        u = rng.uniform(-2, 2, (h, w))
        v = rng.uniform(-2, 2, (h, w))
        pr = make_flow(field_from_array(u), field_from_array(v), 1, 2)
        got = gdconv_forward(stack, pr, POLY).data
        want = flow_warp_ref(stack.frames[1].data, u, v)
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_flow_bad_index(self):
        with pytest.raises(ValueError):
            make_flow(
                field_from_array(np.zeros((4, 4, 1))),
                field_from_array(np.zeros((4, 4, 1))),
                3, 2,
            )


class TestBackward:
    def test_zero_upstream_gives_zero_gradients(self):
        rng = np.random.default_rng(10)
        stack = random_stack(rng, 4, 4, 1, 3)
        pr = random_params(rng, 4, 4, 2, 3)
        bundle = gdconv_backward(stack, pr, POLY, frame_from_array(np.zeros((4, 4))))
        for name in ("weights", "dx", "dy", "z", "mod", "sup_dx", "sup_dy"):
            assert np.all(getattr(bundle, name).data == 0.0)
        for g in bundle.frames:
            assert np.all(g.data == 0.0)

    def test_weight_gradient_is_modulated_sample(self):
        rng = np.random.default_rng(11)
        h, w, c, p, n = 4, 4, 2, 3, 2
        stack = random_stack(rng, h, w, c, p)
        pr = random_params(rng, h, w, n, p)
        up = Frame(h, w, c, rng.uniform(-1, 1, (h, w, c)))
        bundle = gdconv_backward(stack, pr, POLY, up)
        # forward is linear in the weights: d/dW_n = mod_n * s_n summed over channels
        eps = 1e-6
        base = {k: getattr(pr, k).data for k in
                ("weights", "dx", "dy", "z", "mod", "sup_dx", "sup_dy")}
        wplus = base["weights"].copy()
        wplus[1, 2, 0] += eps
        pr2 = params_new(wplus, base["dx"], base["dy"], base["z"], base["mod"],
                         base["sup_dx"], base["sup_dy"], t_plus_1=p)
        d = (np.sum(gdconv_forward(stack, pr2, POLY).data * up.data)
             - np.sum(gdconv_forward(stack, pr, POLY).data * up.data)) / eps
        assert bundle.weights.data[1, 2, 0] == pytest.approx(d, rel=1e-6)

    def test_full_entry_finite_difference(self):
        # every gradient entry of a 6x6 configuration against central differences
        rng = np.random.default_rng(12)
        h, w, c, p, n = 6, 6, 1, 4, 4
        stack = random_stack(rng, h, w, c, p)
        pr = random_params(rng, h, w, n, p)
        up = Frame(h, w, c, rng.uniform(-1, 1, (h, w, c)))
        bundle = gdconv_backward(stack, pr, POLY, up)
        base = {k: getattr(pr, k).data for k in
                ("weights", "dx", "dy", "z", "mod", "sup_dx", "sup_dy")}

        def objective(fields, frames=None):
            s = stack if frames is None else stack_new(frames, list(stack.times))
            pp = params_new(t_plus_1=p, **fields)
            return float(np.sum(gdconv_forward(s, pp, POLY).data * up.data))

        h_step = 1e-4
        worst = 0.0
        for name in base:
            grads = getattr(bundle, name).data.ravel()
            flat = base[name].ravel()
            for j in range(flat.size):
                fields = {k: (v.copy() if k == name else v) for k, v in base.items()}
                fields[name].ravel()[j] = flat[j] + h_step
                up_v = objective(fields)
                fields[name].ravel()[j] = flat[j] - h_step
                dn_v = objective(fields)
                fd = (up_v - dn_v) / (2 * h_step)
                err = abs(grads[j] - fd) / max(abs(grads[j]), abs(fd), 1e-3)
                worst = max(worst, err)
        # source-frame gradients
        for fi in range(p):
            grads = bundle.frames[fi].data.ravel()
            fdata = stack.frames[fi].data
            for j in range(fdata.size):
                pert = fdata.copy()
                pert.ravel()[j] = fdata.ravel()[j] + h_step
                frames = list(stack.frames)
                frames[fi] = Frame(h, w, c, pert)
                up_v = objective(base, frames)
                pert.ravel()[j] = fdata.ravel()[j] - h_step
                frames[fi] = Frame(h, w, c, pert)
                dn_v = objective(base, frames)
                fd = (up_v - dn_v) / (2 * h_step)
                err = abs(grads[j] - fd) / max(abs(grads[j]), abs(fd), 1e-3)
                worst = max(worst, err)
        assert worst < 1e-4

    def test_upstream_shape_check(self):
        rng = np.random.default_rng(13)
        stack = random_stack(rng, 4, 4, 1, 3)
        pr = random_params(rng, 4, 4, 2, 3)
        with pytest.raises(ValueError):
            gdconv_backward(stack, pr, POLY, frame_from_array(np.zeros((4, 5))))

    def test_clamped_entries_get_zero_gradient(self):
        rng = np.random.default_rng(14)
        h, w, n, p = 3, 3, 1, 3
        stack = random_stack(rng, h, w, 1, p)
        shape = (h, w, n)
        pr = params_new(
            np.ones(shape), np.zeros(shape), np.zeros(shape),
            np.full(shape, 5.0), np.full(shape, 1.5),
            np.zeros((h, w, n * p)), np.zeros((h, w, n * p)), t_plus_1=p,
        )
        up = Frame(h, w, 1, rng.uniform(0.5, 1.0, (h, w, 1)))
        bundle = gdconv_backward(stack, pr, LINEAR, up)
        assert np.all(bundle.z.data == 0.0)
        assert np.all(bundle.mod.data == 0.0)


class TestFreedomLadder:
    @pytest.mark.parametrize("variant", list(Freedom))
    def test_frozen_groups_receive_zero_gradients(self, variant):
        rng = np.random.default_rng(15)
        h, w, n, t = 4, 4, 9, 3
        stack = random_stack(rng, h, w, 1, t + 1)
        template = make_freedom(variant, h, w, n, t, z_fixed=1.5)
        # fill the free groups with nonzero values, keep the frozen ones
        frozen = freedom_frozen_fields(variant)
        fields = {}
        for name in ("weights", "dx", "dy", "z", "mod", "sup_dx", "sup_dy"):
            arr = getattr(template, name).data.copy()
            if name not in frozen:
                noise = rng.uniform(0.1, 0.4, arr.shape)
                if name == "z":
                    arr = rng.uniform(0.2, t - 0.2, arr.shape)
                elif name == "mod":
                    arr = rng.uniform(0.2, 0.8, arr.shape)
                else:
                    arr = arr + noise
            fields[name] = arr
        pr = params_new(t_plus_1=t + 1, frozen=frozen, **fields)
        up = Frame(h, w, 1, rng.uniform(0.5, 1.0, (h, w, 1)))
        bundle = gdconv_backward(stack, pr, POLY, up)
        for name in ("weights", "dx", "dy", "z", "mod", "sup_dx", "sup_dy"):
            g = getattr(bundle, name).data
            if name in frozen:
                assert np.all(g == 0.0), f"{variant}: {name} should be frozen"
            elif name in ("weights", "mod"):
                assert np.any(g != 0.0), f"{variant}: {name} should be live"

    def test_variant_a_uses_centered_grid(self):
        pr = make_freedom(Freedom.A, 4, 4, 9, 1, z_fixed=0.5)
        xs = sorted(set(pr.dx.data[0, 0]))
        assert xs == [-1.0, 0.0, 1.0]
        assert np.all(pr.z.data == 0.5)

    def test_variant_a_needs_square_count(self):
        with pytest.raises(ValueError):
            make_freedom(Freedom.A, 4, 4, 8, 1)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(16)
        pr = random_params(rng, 5, 4, 3, 3)
        manifest = tmp_path / "params.json"
        save_params(pr, manifest, interp_kind="inv1d")
        back, kind = load_params(manifest)
        assert str(kind) == "inv1d"
        assert back.n_points == pr.n_points and back.t_plus_1 == pr.t_plus_1
        for name in ("weights", "dx", "dy", "z", "mod", "sup_dx", "sup_dy"):
            a = getattr(pr, name).data
            b = getattr(back, name).data
            np.testing.assert_allclose(a, b, atol=1e-6)  # float32 storage

    def test_forward_agrees_after_round_trip(self, tmp_path):
        rng = np.random.default_rng(17)
        h, w, p = 4, 4, 3
        stack = random_stack(rng, h, w, 1, p)
        pr = random_params(rng, h, w, 2, p)
        manifest = tmp_path / "params.json"
        save_params(pr, manifest)
        back, kind = load_params(manifest)
        a = gdconv_forward(stack, back, kind)
        b = gdconv_forward(stack, back, kind)
        np.testing.assert_array_equal(a.data, b.data)
