extern int xs[100];

int range(int n) {
    int lo = xs[0];
    int hi = xs[0];
    for (int i = 1; i < n; i++) {
        int x = xs[i];
        lo = x < lo ? x : lo;
        hi = x > hi ? x : hi;
    }
    return hi - lo;
}

int mean(int n) {
    int sum = 0;
    for (int i = 0; i < n; i++)
        sum += xs[i] / 16;
    return sum / n;
}

/* Number of sign changes, skipping zeros. */
int crossings(int n) {
    int c = 0;
    int prev = 0;
    for (int i = 0; i < n; i++) {
        int x = xs[i];
        if (x == 0)
            continue;
        if ((x ^ prev) < 0)
            c++;
        prev = x;
    }
    return c;
}
