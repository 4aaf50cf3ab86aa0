void histogram(int n, int H[const restrict static n], int t[const restrict static n])
{
  for (int i = 0; i < n; i++)
    H[t[i]] += 1;
}
