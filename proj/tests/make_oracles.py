#!/usr/bin/env python3
"""Independent reference computations for the frozen constants in the C++
tests. Run it to regenerate the numbers; each section prints the literal
that the corresponding test asserts against."""
import math

print("== histogram entropy, values [0,0,0,1,1,2,3,3], 4 bins ==")
vals = [0, 0, 0, 1, 1, 2, 3, 3]
lo, hi = min(vals), max(vals)
counts = [0] * 4
for v in vals:
    b = int((v - lo) / (hi - lo) * 4)
    b = min(b, 3)
    counts[b] += 1
n = len(vals)
h = -sum(c / n * math.log(c / n) for c in counts if c)
print("counts", counts)
print("h_norm = %.17g" % (h / math.log(4)))

print("\n== pearson, g=[1,2,3,4], s=[1,3,2,4] ==")
g = [1, 2, 3, 4]
s = [1, 3, 2, 4]
mg = sum(g) / 4
ms = sum(s) / 4
gc = [v - mg for v in g]
sc = [v - ms for v in s]
cross = sum(a * b for a, b in zip(gc, sc))
ng2 = sum(a * a for a in gc)
ns2 = sum(b * b for b in sc)
rho = cross / math.sqrt(ng2 * ns2)
print("rho = %.17g, corr_loss = %.17g" % (rho, 1 - rho))

print("\n== gram of [[1,2],[3,4]] and loss vs [[1,1],[1,1]] ==")
A = [[1, 2], [3, 4]]
B = [[1, 1], [1, 1]]
def gram(M):
    h = len(M)
    w = len(M[0])
    return [[sum(M[a][x] * M[b][x] for x in range(w)) / (h * w) for b in range(h)]
            for a in range(h)]
ga, gb = gram(A), gram(B)
print("gram(A) =", ga)
d2 = sum((gb[i][j] - ga[i][j]) ** 2 for i in range(2) for j in range(2))
print("gram_loss (M=1) = %.17g" % d2)

print("\n== sinkhorn 3x3, cost rows [[-,1,2],[2,-,1],[1,2,-]], eps=0.5 ==")
import itertools
eps = 0.5
C = [[None, 1.0, 2.0], [2.0, None, 1.0], [1.0, 2.0, None]]
K = [[0.0 if C[i][j] is None else math.exp(-C[i][j] / eps) for j in range(3)]
     for i in range(3)]
u = [1.0] * 3
v = [1.0] * 3
for _ in range(100000):
    u = [1.0 / sum(K[i][j] * v[j] for j in range(3)) for i in range(3)]
    v = [1.0 / sum(K[i][j] * u[i] for i in range(3)) for j in range(3)]
P = [[u[i] * K[i][j] * v[j] for j in range(3)] for i in range(3)]
for row in P:
    print(["%.17g" % x for x in row])

print("\n== monce, N=2 orthonormal pairs, tau=0.5, anti-diagonal plan ==")
tau = 0.5
loss = 2 * math.log(1 + math.exp(-1 / tau))
print("loss = %.17g" % loss)

print("\n== cross entropy, logits [1,2,3], label 2, batch of 1 ==")
logits = [1.0, 2.0, 3.0]
m = max(logits)
lse = m + math.log(sum(math.exp(x - m) for x in logits))
print("loss = %.17g" % (lse - logits[2]))
soft = [math.exp(x - lse) for x in logits]
print("grad = [%s]" % ", ".join("%.17g" % (soft[k] - (1 if k == 2 else 0)) for k in range(3)))

print("\n== adam single step: w=1, g=0.5, lr=5e-4, defaults ==")
lr, b1, b2, e = 5e-4, 0.9, 0.999, 1e-8
m1 = (1 - b1) * 0.5
v1 = (1 - b2) * 0.25
mh = m1 / (1 - b1)
vh = v1 / (1 - b2)
w = 1.0 - lr * mh / (math.sqrt(vh) + e)
print("w' = %.17g" % w)

print("\n== importance weight table ==")
for hg, hs, alpha, gamma in [(0.0, 0.0, 1.0, 1.0), (1.0, 1.0, 1.0, 1.0),
                             (0.5, 0.25, 1.0, 1.0), (0.5, 0.25, 2.0, 1.0),
                             (0.5, 0.25, 1.0, 2.0), (0.2, 0.8, 0.5, 3.0)]:
    imp = ((1 - hg) + (1 - hs)) / 2
    w = (1 + alpha * imp) ** gamma
    print("hg=%g hs=%g a=%g g=%g -> I=%.17g w=%.17g" % (hg, hs, alpha, gamma, imp, w))
