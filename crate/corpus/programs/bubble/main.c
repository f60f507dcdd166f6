extern int v[32];
void sort(int n);

int is_sorted(int n) {
    for (int i = 1; i < n; i++) {
        if (v[i - 1] > v[i])
            return 0;
    }
    return 1;
}

int main(int a, int b) {
    int n = 2 + (b & 31) % 31;
    int s = a;
    for (int i = 0; i < n; i++) {
        s = s * 69069 + 1;
        v[i] = (s >> 20) - 2048;
    }
    sort(n);
    return is_sorted(n) * 100000 + v[0] + v[n - 1];
}
